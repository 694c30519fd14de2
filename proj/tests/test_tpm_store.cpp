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

#include <fstream>

#include "support/test_util.hpp"
#include "tpm2eid/ea_engine.hpp"
#include "tpm2eid/errors.hpp"
#include "tpm2eid/tpm_store.hpp"

using namespace tpm2eid;
using crypto::Digest;
using tpm::TpmStore;

namespace {
Digest measurement(std::uint8_t fill) {
    Digest d;
    d.bytes.fill(fill);
    return d;
}

tpm::NvAttributes counter_attrs() {
    tpm::NvAttributes a;
    a.is_counter = true;
    a.open_increment = true;
    a.open_read = true;
    return a;
}
}  // namespace

TEST_CASE("pcr extend updates the slot, the counter, and nothing else") {
    TpmStore store = tpm::init_store(1);
    Digest m = measurement(0x11);

    Digest before_other = store.pcr_bank.pcrs[0];
    Digest result = pcr_extend(store, 1, m);
    CHECK(result == crypto::extend(Digest::zero(), m.view()));
    CHECK(store.pcr_bank.update_counter == 1);
    CHECK(store.pcr_bank.pcrs[0] == before_other);

    pcr_extend(store, 1, m);
    CHECK(store.pcr_bank.update_counter == 2);
    CHECK_THROWS_AS(pcr_extend(store, 24, m), TpmError);
}

TEST_CASE("pcr extend order dependence against the oracle") {
    Digest a = measurement(0xA0), b = measurement(0xB0);
    TpmStore s1 = tpm::init_store(1);
    TpmStore s2 = tpm::init_store(1);
    pcr_extend(s1, 0, a);
    pcr_extend(s1, 0, b);
    pcr_extend(s2, 0, b);
    pcr_extend(s2, 0, a);
    CHECK_FALSE(s1.pcr_bank.pcrs[0] == s2.pcr_bank.pcrs[0]);

    chain_oracle::Buf one(32, 0);
    chain_oracle::put_block(one, test_util::to_block(a));
    chain_oracle::Block mid = chain_oracle::sha256(one);
    chain_oracle::Buf two(mid.begin(), mid.end());
    chain_oracle::put_block(two, test_util::to_block(b));
    CHECK(s1.pcr_bank.pcrs[0] == test_util::from_block(chain_oracle::sha256(two)));
}

TEST_CASE("pcrUpdateCounter counts every extend since initialization") {
    TpmStore store = tpm::init_store(3);
    for (int i = 0; i < 7; ++i) {
        pcr_extend(store, static_cast<std::uint32_t>(i % 3), measurement(0x22));
    }
    CHECK(store.pcr_bank.update_counter == 7);
}

TEST_CASE("nv define initializes, collides, and keeps names stable") {
    TpmStore store = tpm::init_store(1);

    auto name = nv_define_space(store, 0x1500, 8, counter_attrs(), {}, Digest::zero());
    CHECK(store.nv.at(0x1500).counter_value() == 0);
    CHECK_THROWS_AS(nv_define_space(store, 0x1500, 8, counter_attrs(), {}, Digest::zero()),
                    TpmError);

    // Same public attributes, different authValue: the name must not move.
    nv_undefine_space(store, 0x1500, tpm::PasswordAuth{{}});
    auto name2 =
        nv_define_space(store, 0x1500, 8, counter_attrs(), to_bytes("secret"), Digest::zero());
    CHECK(name == name2);

    CHECK_THROWS_AS(nv_define_space(store, 0x1501, 4, counter_attrs(), {}, Digest::zero()),
                    TpmError);  // counters are 8 bytes
}

TEST_CASE("nv undefine requires authorization") {
    TpmStore store = tpm::init_store(1);
    nv_define_space(store, 0x1400, 0, {}, to_bytes("1234"), Digest::zero());

    CHECK_THROWS_AS(nv_undefine_space(store, 0x1400, tpm::PasswordAuth{to_bytes("9999")}),
                    TpmError);
    CHECK(store.nv.contains(0x1400));
    nv_undefine_space(store, 0x1400, tpm::PasswordAuth{to_bytes("1234")});
    CHECK_FALSE(store.nv.contains(0x1400));
    CHECK_THROWS_AS(nv_undefine_space(store, 0x1400, tpm::PasswordAuth{to_bytes("1234")}),
                    TpmError);
}

TEST_CASE("counters only count") {
    TpmStore store = tpm::init_store(1);
    nv_define_space(store, 0x1500, 8, counter_attrs(), {}, Digest::zero());
    nv_define_space(store, 0x1400, 4, {}, {}, Digest::zero());

    CHECK(nv_increment(store, 0x1500, {}) == 1);
    CHECK(nv_increment(store, 0x1500, {}) == 2);
    CHECK(nv_increment(store, 0x1500, {}) == 3);
    CHECK(read_be64(nv_read(store, 0x1500, {})) == 3);
    CHECK_THROWS_AS(nv_increment(store, 0x1400, {}), TpmError);
}

TEST_CASE("nv read honors openRead, authValue, and policy sessions") {
    TpmStore store = tpm::init_store(1);
    // Gated NV: readable only with its authValue or through a session whose
    // policy is command-code NV_Read.
    Digest read_policy = tpm::policy_update::command_code(Digest::zero(), cc::kNvRead);
    tpm::NvAttributes attrs;
    nv_define_space(store, 0x2000, 4, attrs, to_bytes("pw"), read_policy);

    CHECK_THROWS_AS(nv_read(store, 0x2000, {}), TpmError);
    CHECK(nv_read(store, 0x2000, tpm::PasswordAuth{to_bytes("pw")}) == Bytes(4, 0));

    std::uint32_t session = start_auth_session(store, tpm::SessionType::policy);
    policy_command_code(store, session, cc::kNvRead);
    CHECK(nv_read(store, 0x2000, tpm::SessionAuth{session, std::nullopt}) == Bytes(4, 0));
    CHECK_FALSE(session_alive(store, session));  // gate is one-shot

    // A sign-gated session must not read.
    std::uint32_t wrong = start_auth_session(store, tpm::SessionType::policy);
    policy_command_code(store, wrong, cc::kSign);
    CHECK_THROWS_AS(nv_read(store, 0x2000, tpm::SessionAuth{wrong, std::nullopt}), TpmError);
}

TEST_CASE("created keys echo their creation environment") {
    TpmStore store = tpm::init_store(1);
    pcr_extend(store, 0, measurement(0x55));
    Digest policy = crypto::hash("some policy");

    tpm::KeyAttributes attrs;
    attrs.sign_capable = true;
    auto created = create_key(store, policy, {}, attrs, 0x1);
    CHECK(created.creation.auth_policy == policy);
    CHECK(created.creation.pcr_digest == pcr_composite(store, 0x1));

    auto other = create_key(store, policy, {}, attrs, 0x1);
    CHECK_FALSE(created.name == other.name);
    CHECK(store.keys.at(created.handle).auth_policy ==
          store.keys.at(other.handle).auth_policy);

    // No session, no signature.
    CHECK_THROWS_AS(sign_gated(store, created.handle, crypto::hash("doc"), 0xdead), TpmError);
}

TEST_CASE("external key loading") {
    TpmStore store = tpm::init_store(1);
    auto kp = crypto::derive_keypair(crypto::DeterministicRng::from_seed(5).generate(32));

    std::uint32_t h1 = load_external(store, kp.public_part);
    std::uint32_t h2 = load_external(store, kp.public_part);
    CHECK(h1 != h2);
    CHECK(store.loaded_external.at(h1).name == store.loaded_external.at(h2).name);
    CHECK_THROWS_AS(load_external(store, to_bytes("short")), TpmError);
}

TEST_CASE("clock is monotone and persists on the configured interval") {
    test_util::TempDir dir;
    auto path = dir.path() / "clock.state";

    TpmStore store = tpm::init_store(1);
    CHECK(clock_advance(store, 0) == 0);
    CHECK(clock_advance(store, 1000) == 1000);
    CHECK(clock_read(store) == 1000);

    // 1000ms is below the 60000ms persistence interval: lost at reload.
    save_state(store, path);
    CHECK(clock_read(load_state(path)) == 0);

    clock_advance(store, 69000);  // 70000 total, crosses the interval
    save_state(store, path);
    TpmStore reloaded = load_state(path);
    CHECK(clock_read(reloaded) >= 60000);
    CHECK(reloaded.clock.last_persisted_at <= reloaded.clock.milliseconds);
}

TEST_CASE("state file round trip preserves the persistent world") {
    test_util::TempDir dir;
    auto path = dir.path() / "tpm.state";

    TpmStore store = tpm::init_store(42);
    pcr_extend(store, 0, measurement(0x77));
    nv_define_space(store, 0x1500, 8, counter_attrs(), {}, Digest::zero());
    nv_increment(store, 0x1500, {});
    tpm::KeyAttributes kattrs;
    kattrs.sign_capable = true;
    auto created = create_key(store, crypto::hash("p"), to_bytes("k"), kattrs, 0x1);
    std::uint32_t session = start_auth_session(store, tpm::SessionType::policy);
    load_external(store, store.keys.at(created.handle).public_key);

    save_state(store, path);
    TpmStore loaded = load_state(path);

    CHECK(loaded.device_id == store.device_id);
    CHECK(loaded.proof_value == store.proof_value);
    CHECK(loaded.pcr_bank.update_counter == store.pcr_bank.update_counter);
    CHECK(loaded.pcr_bank.pcrs[0] == store.pcr_bank.pcrs[0]);
    CHECK(loaded.nv.at(0x1500).counter_value() == 1);
    CHECK(loaded.nv.at(0x1500).name() == store.nv.at(0x1500).name());
    CHECK(loaded.keys.at(created.handle).name() == created.name);
    // Volatile things do not survive.
    CHECK(loaded.sessions.empty());
    CHECK(loaded.loaded_external.empty());
    CHECK(session_alive(store, session));  // original untouched

    // The generator must resume, not replay: next outputs differ only if
    // state advanced, and reloaded state matches the saved position.
    CHECK(loaded.rng.counter() == store.rng.counter());
}

TEST_CASE("corrupted state files are rejected") {
    test_util::TempDir dir;
    auto path = dir.path() / "tpm.state";
    TpmStore store = tpm::init_store(7);
    save_state(store, path);

    std::string text;
    {
        std::ifstream in(path);
        std::getline(in, text, '\0');
    }
    // Flip one hex digit inside the body (keeps the JSON well-formed).
    auto pos = text.find(store.device_id);
    REQUIRE(pos != std::string::npos);
    text[pos] = text[pos] == '0' ? '1' : '0';
    {
        std::ofstream out(path, std::ios::trunc);
        out << text;
    }
    CHECK_THROWS_WITH_AS(static_cast<void>(load_state(path)),
                         doctest::Contains("checksum mismatch"), TpmError);
}

TEST_CASE("counter values never decrease within a store lifetime") {
    TpmStore store = tpm::init_store(11);
    nv_define_space(store, 0x1500, 8, counter_attrs(), {}, Digest::zero());
    std::uint64_t last = 0;
    for (int i = 0; i < 20; ++i) {
        std::uint64_t now = nv_increment(store, 0x1500, {});
        CHECK(now == last + 1);
        last = now;
    }
}
