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

#include "tpm2eid/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <cstring>
#include <memory>
#include <stdexcept>

#include "tpm2eid/errors.hpp"

namespace tpm2eid::crypto {

namespace {

struct PkeyDeleter {
    void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

constexpr std::size_t kEd25519KeySize = 32;
constexpr std::size_t kEd25519SigSize = 64;

}  // namespace

bool Digest::is_zero() const {
    for (auto b : bytes) {
        if (b != 0) return false;
    }
    return true;
}

std::string Digest::hex() const {
    return to_hex(ByteView(bytes.data(), bytes.size()));
}

Digest Digest::from_hex(std::string_view hex) {
    Bytes raw = tpm2eid::from_hex(hex);
    if (raw.size() != kDigestSize) {
        throw std::invalid_argument("digest hex must decode to 32 bytes");
    }
    Digest d;
    std::memcpy(d.bytes.data(), raw.data(), kDigestSize);
    return d;
}

Bytes ObjectName::wire() const {
    Bytes out = be16(alg_id);
    out.insert(out.end(), bytes.begin(), bytes.end());
    return out;
}

std::string ObjectName::hex() const { return to_hex(wire()); }

ObjectName ObjectName::from_hex(std::string_view hex) {
    Bytes raw = tpm2eid::from_hex(hex);
    if (raw.size() != kDigestSize + 2) {
        throw std::invalid_argument("object name hex must decode to 34 bytes");
    }
    ObjectName n;
    n.alg_id = static_cast<std::uint16_t>((raw[0] << 8) | raw[1]);
    std::memcpy(n.bytes.data(), raw.data() + 2, kDigestSize);
    return n;
}

Digest hash(ByteView data) {
    Digest d;
    SHA256(data.data(), data.size(), d.bytes.data());
    return d;
}

Digest hash(std::string_view data) {
    return hash(ByteView(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

Digest hash_concat(std::initializer_list<ByteView> pieces) {
    Bytes buf;
    for (ByteView p : pieces) {
        buf.insert(buf.end(), p.begin(), p.end());
    }
    return hash(buf);
}

Digest extend(const Digest& old, ByteView payload) {
    return hash_concat({old.view(), payload});
}

ObjectName compute_object_name(ByteView public_area) {
    Digest d = hash(public_area);
    ObjectName n;
    n.alg_id = kAlgSha256;
    n.bytes = d.bytes;
    return n;
}

Bytes hmac_sha256(ByteView key, ByteView message) {
    Bytes mac(kDigestSize);
    unsigned int len = 0;
    if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), message.data(),
              message.size(), mac.data(), &len) ||
        len != kDigestSize) {
        throw std::runtime_error("HMAC-SHA256 failed");
    }
    return mac;
}

SignatureKeyPair derive_keypair(ByteView seed) {
    if (seed.size() != kEd25519KeySize) {
        throw std::invalid_argument("key seed must be 32 bytes");
    }
    PkeyPtr pkey(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
    if (!pkey) {
        throw std::runtime_error("Ed25519 key derivation failed");
    }
    SignatureKeyPair kp;
    kp.private_part.assign(seed.begin(), seed.end());
    kp.public_part.resize(kEd25519KeySize);
    std::size_t publen = kp.public_part.size();
    if (!EVP_PKEY_get_raw_public_key(pkey.get(), kp.public_part.data(), &publen) ||
        publen != kEd25519KeySize) {
        throw std::runtime_error("Ed25519 public key extraction failed");
    }
    return kp;
}

Bytes sign(const SignatureKeyPair& key, ByteView message) {
    if (key.scheme_id != kSchemeEd25519) {
        throw TpmError(ErrorStage::command, "sign", "unsupported signature scheme");
    }
    PkeyPtr pkey(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, key.private_part.data(),
                                              key.private_part.size()));
    if (!pkey) {
        throw std::runtime_error("Ed25519 private key load failed");
    }
    MdCtxPtr ctx(EVP_MD_CTX_new());
    Bytes sig(kEd25519SigSize);
    std::size_t siglen = sig.size();
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1 ||
        EVP_DigestSign(ctx.get(), sig.data(), &siglen, message.data(), message.size()) != 1 ||
        siglen != kEd25519SigSize) {
        throw std::runtime_error("Ed25519 signing failed");
    }
    return sig;
}

bool verify(ByteView public_part, ByteView message, ByteView signature) {
    if (public_part.size() != kEd25519KeySize || signature.size() != kEd25519SigSize) {
        return false;
    }
    PkeyPtr pkey(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_part.data(),
                                             public_part.size()));
    if (!pkey) {
        return false;
    }
    MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1) {
        return false;
    }
    return EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), message.data(),
                            message.size()) == 1;
}

DeterministicRng::DeterministicRng(std::array<std::uint8_t, kDigestSize> state,
                                   std::uint64_t counter)
    : state_(state), counter_(counter) {}

DeterministicRng DeterministicRng::from_seed(std::uint64_t seed) {
    Bytes material = to_bytes("tpm2eid-rng-v1:");
    put_be64(material, seed);
    return DeterministicRng(hash(material).bytes, 0);
}

DeterministicRng DeterministicRng::from_entropy() {
    std::array<std::uint8_t, kDigestSize> state{};
    if (RAND_bytes(state.data(), static_cast<int>(state.size())) != 1) {
        throw std::runtime_error("system entropy unavailable");
    }
    return DeterministicRng(state, 0);
}

Bytes DeterministicRng::generate(std::size_t n) {
    Bytes out;
    out.reserve(n);
    while (out.size() < n) {
        Bytes block_input(state_.begin(), state_.end());
        put_be64(block_input, counter_++);
        Digest block = hash(block_input);
        std::size_t take = std::min(kDigestSize, n - out.size());
        out.insert(out.end(), block.bytes.begin(), block.bytes.begin() + take);
    }
    return out;
}

DeterministicRng DeterministicRng::derive(std::string_view label) const {
    Bytes material(state_.begin(), state_.end());
    Bytes label_bytes = to_bytes(label);
    material.insert(material.end(), label_bytes.begin(), label_bytes.end());
    return DeterministicRng(hash(material).bytes, 0);
}

}  // namespace tpm2eid::crypto
