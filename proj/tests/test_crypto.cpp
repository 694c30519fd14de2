// Copyright (c) 2026 The tpm2eid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include <json.hpp>

#include "support/test_util.hpp"
#include "tpm2eid/crypto.hpp"
#include "tpm2eid/tpm_store.hpp"

using namespace tpm2eid;
using crypto::Digest;

namespace {
nlohmann::json load_golden() {
    std::ifstream in(test_util::golden("listings_golden.json"));
    REQUIRE(in.good());
    return nlohmann::json::parse(in);
}
}  // namespace

TEST_CASE("sha256 matches published test vectors") {
    CHECK(crypto::hash("").hex() ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(crypto::hash("abc").hex() ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(crypto::hash("abc") == crypto::hash("abc"));
}

TEST_CASE("extend is the hash of old digest concatenated with the payload") {
    Digest zero = Digest::zero();
    Bytes payload = to_bytes("payload");

    Bytes concat(zero.bytes.begin(), zero.bytes.end());
    concat.insert(concat.end(), payload.begin(), payload.end());
    CHECK(crypto::extend(zero, payload) == crypto::hash(concat));
}

TEST_CASE("extend golden value from the independent corpus") {
    auto golden = load_golden();
    Bytes measurement = from_hex(golden["extend"]["measurement"].get<std::string>());
    CHECK(crypto::extend(Digest::zero(), measurement).hex() ==
          golden["extend"]["value"].get<std::string>());
}

TEST_CASE("extend order matters, against the raw-SHA oracle") {
    Bytes a = to_bytes("component-a");
    Bytes b = to_bytes("component-b");

    Digest ab = crypto::extend(crypto::extend(Digest::zero(), a), b);
    Digest ba = crypto::extend(crypto::extend(Digest::zero(), b), a);
    CHECK(ab != ba);

    // Flat recomputation with direct SHA-256 calls.
    auto flat = [](const Bytes& first, const Bytes& second) {
        chain_oracle::Buf one(32, 0);
        chain_oracle::put_bytes(one, test_util::to_buf(first));
        chain_oracle::Block mid = chain_oracle::sha256(one);
        chain_oracle::Buf two(mid.begin(), mid.end());
        chain_oracle::put_bytes(two, test_util::to_buf(second));
        return chain_oracle::sha256(two);
    };
    CHECK(ab == test_util::from_block(flat(a, b)));
    CHECK(ba == test_util::from_block(flat(b, a)));
}

TEST_CASE("permuting a distinct payload sequence changes the final digest") {
    std::mt19937_64 rng(0xE1D);
    for (int round = 0; round < 200; ++round) {
        std::size_t count = 2 + rng() % 4;
        std::vector<Bytes> payloads;
        for (std::size_t i = 0; i < count; ++i) {
            Bytes p(8);
            for (auto& byte : p) byte = static_cast<std::uint8_t>(rng());
            p.push_back(static_cast<std::uint8_t>(i));  // force distinctness
            payloads.push_back(std::move(p));
        }
        auto chain = [](const std::vector<Bytes>& seq) {
            Digest d = Digest::zero();
            for (const auto& p : seq) d = crypto::extend(d, p);
            return d;
        };
        Digest original = chain(payloads);
        std::vector<Bytes> shuffled = payloads;
        do {
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
        } while (shuffled == payloads);
        CHECK(chain(shuffled) != original);
    }
}

TEST_CASE("object names ignore authValue and sensitive fields") {
    tpm::NvIndex a;
    a.index = 0x1400;
    a.size = 0;
    a.auth_policy = Digest::zero();
    tpm::NvIndex b = a;
    a.auth_value = to_bytes("1234");
    b.auth_value = to_bytes("9999");
    b.data = to_bytes("ignored too? no: data differs only here");
    CHECK(a.name() == b.name());

    tpm::KeyObject k1;
    k1.public_key = Bytes(32, 0x01);
    tpm::KeyObject k2;
    k2.public_key = Bytes(32, 0x02);
    CHECK_FALSE(k1.name() == k2.name());
}

TEST_CASE("external key name golden value") {
    auto golden = load_golden();
    Bytes pub = from_hex(golden["external_key_name"]["public_key"].get<std::string>());
    auto name = crypto::compute_object_name(
        tpm::external_key_public_area(pub, crypto::kSchemeEd25519));
    CHECK(name.hex() == golden["external_key_name"]["name"].get<std::string>());
}

TEST_CASE("signature round trip, message binding and key binding") {
    auto rng = crypto::DeterministicRng::from_seed(7);
    auto key = crypto::derive_keypair(rng.generate(32));
    auto other = crypto::derive_keypair(rng.generate(32));

    Bytes msg = to_bytes("document digest stand-in");
    Bytes sig = crypto::sign(key, msg);
    CHECK(crypto::verify(key.public_part, msg, sig));

    Bytes msg2 = to_bytes("document digest stand-on");
    CHECK_FALSE(crypto::verify(key.public_part, msg2, sig));
    CHECK_FALSE(crypto::verify(other.public_part, msg, sig));
}

TEST_CASE("signing is deterministic for a fixed key and message") {
    auto key = crypto::derive_keypair(crypto::DeterministicRng::from_seed(9).generate(32));
    Bytes msg = to_bytes("m");
    CHECK(crypto::sign(key, msg) == crypto::sign(key, msg));
}

TEST_CASE("deterministic rng replays and resumes") {
    auto a = crypto::DeterministicRng::from_seed(42);
    auto b = crypto::DeterministicRng::from_seed(42);
    CHECK(a.generate(80) == b.generate(80));

    Bytes next_expected = b.generate(16);
    crypto::DeterministicRng resumed(a.state(), a.counter());
    CHECK(resumed.generate(16) == next_expected);

    CHECK(crypto::DeterministicRng::from_seed(1).generate(32) !=
          crypto::DeterministicRng::from_seed(2).generate(32));
    CHECK(a.derive("x").generate(32) != a.derive("y").generate(32));
}

TEST_CASE("hmac differs by key and message") {
    Bytes k1 = to_bytes("k1"), k2 = to_bytes("k2"), m = to_bytes("m");
    CHECK(crypto::hmac_sha256(k1, m) == crypto::hmac_sha256(k1, m));
    CHECK(crypto::hmac_sha256(k1, m) != crypto::hmac_sha256(k2, m));
    CHECK(crypto::hmac_sha256(k1, m) != crypto::hmac_sha256(k1, to_bytes("n")));
}

TEST_CASE("hex round trip and validation") {
    Bytes b = {0x00, 0xff, 0x10, 0xab};
    CHECK(from_hex(to_hex(b)) == b);
    CHECK_THROWS_AS(from_hex("abc"), std::invalid_argument);
    CHECK_THROWS_AS(from_hex("zz"), std::invalid_argument);
}
