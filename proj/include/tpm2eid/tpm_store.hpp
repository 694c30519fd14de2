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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tpm2eid/bytes.hpp"
#include "tpm2eid/crypto.hpp"

namespace tpm2eid::tpm {

using crypto::Digest;
using crypto::ObjectName;

constexpr std::size_t kPcrCount = 24;
constexpr std::uint32_t kCounterSize = 8;
constexpr std::uint64_t kDefaultClockPersistIntervalMs = 60000;
constexpr std::size_t kDefaultSessionCap = 64;

struct KeyAttributes {
    bool sign_capable = false;
    bool fixed_to_store = true;

    std::uint32_t bits() const;
    static KeyAttributes from_bits(std::uint32_t bits);
    bool operator==(const KeyAttributes&) const = default;
};

struct NvAttributes {
    bool is_counter = false;
    bool written_once = false;
    bool open_increment = false;
    bool open_read = false;

    std::uint32_t bits() const;
    static NvAttributes from_bits(std::uint32_t bits);
    bool operator==(const NvAttributes&) const = default;
};

/// Attributes echoed back from key creation so an enrolment authority can
/// confirm what the key was bound to.
struct CreationData {
    std::uint32_t pcr_mask = 0;
    Digest pcr_digest;
    Digest auth_policy;
};

struct KeyObject {
    std::uint32_t handle = 0;
    Bytes public_key;
    std::uint16_t scheme_id = crypto::kSchemeEd25519;
    KeyAttributes attributes;
    Digest auth_policy;
    CreationData creation;
    // Sensitive; never part of the public area or any readable report.
    Bytes private_key;
    Bytes auth_value;

    Bytes public_area() const;
    ObjectName name() const;
};

struct NvIndex {
    std::uint32_t index = 0;
    std::uint32_t size = 0;
    NvAttributes attributes;
    Digest auth_policy;
    Bytes data;
    // Sensitive.
    Bytes auth_value;

    Bytes public_area() const;
    ObjectName name() const;
    std::uint64_t counter_value() const;
};

/// Canonical public-area encodings, shared by objects that exist and by
/// callers that need a name before creation (length-prefixed fields; see
/// docs/state-format.md).
Bytes key_public_area(ByteView public_key, std::uint16_t scheme_id, KeyAttributes attributes,
                      const Digest& auth_policy);
Bytes nv_public_area(std::uint32_t index, std::uint32_t size, NvAttributes attributes,
                     const Digest& auth_policy);
/// Public area of an externally loaded verification key (no attributes, no
/// policy); this is the form whose name PolicyAuthorize binds.
Bytes external_key_public_area(ByteView public_key, std::uint16_t scheme_id);

struct PcrBank {
    std::vector<Digest> pcrs = std::vector<Digest>(kPcrCount);
    std::uint64_t update_counter = 0;
};

struct ClockState {
    std::uint64_t milliseconds = 0;
    std::uint64_t last_persisted_at = 0;
    std::uint64_t persist_interval_ms = kDefaultClockPersistIntervalMs;
};

enum class SessionType { policy, trial };

/// Per-session policy state. Held by the store, mutated only by the policy
/// engine (ea_engine.hpp).
struct PolicySession {
    std::uint32_t handle = 0;
    SessionType session_type = SessionType::policy;
    std::optional<ObjectName> bound_object;
    Digest policy_digest;  // starts all-zero
    std::optional<std::uint32_t> gated_command_code;
    std::optional<std::uint64_t> pcr_counter_snapshot;
    bool is_auth_value_needed = false;
    bool is_password_needed = false;
};

struct LoadedExternalKey {
    std::uint32_t handle = 0;
    Bytes public_key;
    std::uint16_t scheme_id = crypto::kSchemeEd25519;
    ObjectName name;
};

/// The simulated TPM's world. A single exclusively-owned value: all
/// mutations go through one access point (the TPM is a serial command
/// processor). Sessions and loaded external keys are volatile.
struct TpmStore {
    std::uint16_t hash_alg = crypto::kAlgSha256;
    std::string device_id;  // hex, non-sensitive
    Bytes proof_value;      // sensitive: keys the ticket HMACs, never exported
    crypto::DeterministicRng rng = crypto::DeterministicRng::from_seed(0);
    PcrBank pcr_bank;
    ClockState clock;
    std::map<std::uint32_t, KeyObject> keys;
    std::map<std::uint32_t, NvIndex> nv;
    std::map<std::uint32_t, PolicySession> sessions;               // volatile
    std::map<std::uint32_t, LoadedExternalKey> loaded_external;    // volatile
    std::uint32_t next_key_handle = 0x81000000;
    std::uint32_t next_session_handle = 0x03000000;                // volatile
    std::uint32_t next_external_handle = 0x80000000;               // volatile
    std::size_t session_cap = kDefaultSessionCap;
};

TpmStore init_store(std::optional<std::uint64_t> seed,
                    std::uint64_t clock_persist_interval_ms = kDefaultClockPersistIntervalMs);

/// How a caller authorizes an NV command: nothing (open paths only), the
/// index's authValue as a password, or a satisfied policy session.
struct PasswordAuth {
    Bytes value;
};
struct SessionAuth {
    std::uint32_t handle = 0;
    std::optional<Bytes> auth_value;  // only when the policy deferred a PIN check
};
using Authorization = std::variant<std::monostate, PasswordAuth, SessionAuth>;

Digest pcr_extend(TpmStore& store, std::uint32_t pcr_index, const Digest& measurement);
/// Composite digest over the selected PCRs (ascending index order).
Digest pcr_composite(const TpmStore& store, std::uint32_t pcr_mask);

ObjectName nv_define_space(TpmStore& store, std::uint32_t index, std::uint32_t size,
                           NvAttributes attributes, ByteView auth_value,
                           const Digest& auth_policy);
void nv_undefine_space(TpmStore& store, std::uint32_t index, const Authorization& auth);
std::uint64_t nv_increment(TpmStore& store, std::uint32_t index, const Authorization& auth);
Bytes nv_read(TpmStore& store, std::uint32_t index, const Authorization& auth);

struct CreatedKey {
    std::uint32_t handle = 0;
    CreationData creation;
    ObjectName name;
};
CreatedKey create_key(TpmStore& store, const Digest& auth_policy, ByteView auth_value,
                      KeyAttributes attributes, std::uint32_t creation_pcr_mask);

std::uint32_t load_external(TpmStore& store, ByteView public_key);

std::uint64_t clock_read(const TpmStore& store);
std::uint64_t clock_advance(TpmStore& store, std::uint64_t delta_ms);

void save_state(const TpmStore& store, const std::filesystem::path& path);
TpmStore load_state(const std::filesystem::path& path);

}  // namespace tpm2eid::tpm
