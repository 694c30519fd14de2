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

#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>

#include "tpm2eid/bytes.hpp"

namespace tpm2eid::crypto {

// TPM 2.0 algorithm identifiers for the two primitives fixed per state file.
constexpr std::uint16_t kAlgSha256 = 0x000B;
constexpr std::uint16_t kSchemeEd25519 = 0x0060;
constexpr std::size_t kDigestSize = 32;

/// A hash value tagged with its algorithm. Equality is byte equality.
struct Digest {
    std::uint16_t alg_id = kAlgSha256;
    std::array<std::uint8_t, kDigestSize> bytes{};

    static Digest zero() { return Digest{}; }
    static Digest from_hex(std::string_view hex);

    bool operator==(const Digest&) const = default;
    bool is_zero() const;
    std::string hex() const;
    ByteView view() const { return ByteView(bytes.data(), bytes.size()); }
};

/// Name of a TPM object: a function of the public area only, never of the
/// authValue or other sensitive fields. Wire form is algId || hash, and the
/// wire form is what enters policy-digest updates.
struct ObjectName {
    std::uint16_t alg_id = kAlgSha256;
    std::array<std::uint8_t, kDigestSize> bytes{};

    bool operator==(const ObjectName&) const = default;
    Bytes wire() const;
    std::string hex() const;
    static ObjectName from_hex(std::string_view hex);
};

Digest hash(ByteView data);
Digest hash(std::string_view data);
/// hash of the concatenation of the given pieces.
Digest hash_concat(std::initializer_list<ByteView> pieces);

/// PCR / policy-digest extension step: hash(old.bytes || payload).
Digest extend(const Digest& old, ByteView payload);

ObjectName compute_object_name(ByteView public_area);

Bytes hmac_sha256(ByteView key, ByteView message);

/// Fixed-scheme signature key pair (Ed25519). private_part is the 32-byte
/// seed; public_part the 32-byte public key. Signing is deterministic.
struct SignatureKeyPair {
    std::uint16_t scheme_id = kSchemeEd25519;
    Bytes public_part;
    Bytes private_part;
};

/// Derives the key pair from a 32-byte seed. Throws on bad seed size.
SignatureKeyPair derive_keypair(ByteView seed);

/// Throws TpmError on unsupported scheme.
Bytes sign(const SignatureKeyPair& key, ByteView message);
bool verify(ByteView public_part, ByteView message, ByteView signature);

/// SHA-256 counter-mode generator. Not a production DRBG; it exists so a
/// whole state-file lifetime can be replayed bit-exactly from one seed.
class DeterministicRng {
public:
    static DeterministicRng from_seed(std::uint64_t seed);
    static DeterministicRng from_entropy();
    /// Resume a persisted generator.
    DeterministicRng(std::array<std::uint8_t, kDigestSize> state, std::uint64_t counter);

    Bytes generate(std::size_t n);
    /// A child generator with an independent stream, derived from a label.
    DeterministicRng derive(std::string_view label) const;

    const std::array<std::uint8_t, kDigestSize>& state() const { return state_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::array<std::uint8_t, kDigestSize> state_{};
    std::uint64_t counter_ = 0;
};

}  // namespace tpm2eid::crypto
