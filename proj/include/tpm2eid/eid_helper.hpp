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

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tpm2eid/policy_dsl.hpp"
#include "tpm2eid/ra_authority.hpp"
#include "tpm2eid/tpm_store.hpp"

// The REE helper: orchestrates the full signing policy end to end, manages
// PIN/PUK NV objects, the retry counter and its two-phase reset, PIN change,
// and revocation-license refresh. It is untrusted by construction: nothing
// it does can mint a signature the policy would not allow; misbehaviour is
// denial of service only.
namespace tpm2eid::eid {

using crypto::Digest;
using crypto::ObjectName;
using tpm::TpmStore;

struct PinPolicy {
    std::size_t min_len = 4;
    std::size_t max_len = 12;
};

constexpr std::uint32_t kDefaultPinIndex = 0x1400;
constexpr std::uint32_t kDefaultCounterIndex = 0x1500;
constexpr std::uint32_t kDefaultPukIndex = 0x1600;
constexpr int kDefaultMaxAttempts = 3;
constexpr std::uint32_t kDefaultPcrMask = 0x3;  // PCR 0 (OS) and PCR 1 (helper)

struct PinRecord {
    std::uint32_t nv_index = 0;
    ObjectName name;  // stable across PIN change and recreation
};

struct PukRecord {
    std::uint32_t nv_index = 0;
    Bytes auth_value;  // shown to the user exactly once at provisioning
};

/// One PIN/PUK/counter trio plus everything needed to run the counter-reset
/// policy (sources and RA licenses; no secrets).
struct PinSetRecord {
    std::uint32_t pin_index = kDefaultPinIndex;
    std::uint32_t counter_index = kDefaultCounterIndex;
    std::uint32_t puk_index = kDefaultPukIndex;
    ObjectName pin_name;
    ObjectName counter_name;
    ObjectName puk_name;
    Digest counter_auth_policy;
    int max_attempts = kDefaultMaxAttempts;
    std::string reset_policy_source;
    std::map<std::string, ra::AuthorizationLicense> reset_licenses;
};

struct EidCredential {
    std::string id;  // hex of the key name
    std::uint32_t key_handle = 0;
    ra::Certificate certificate;
    std::uint32_t pin_nv_index = 0;
    std::uint32_t counter_nv_index = 0;
    std::map<std::string, ra::AuthorizationLicense> licenses;
    int max_attempts = kDefaultMaxAttempts;
    bool with_revocation = false;
    std::string policy_source;
};

/// Device-side helper state. Persisted as a credential-bundle file that
/// contains no secret material.
struct HelperState {
    std::string device_id;
    Bytes ra_public_key;
    Bytes ca_public_key;
    std::uint32_t pcr_mask = kDefaultPcrMask;
    bool platform_recreation_open = true;
    PinPolicy pin_policy;
    std::optional<PinSetRecord> pin_set;
    std::vector<EidCredential> credentials;

    void save(const std::filesystem::path& path) const;
    static HelperState load(const std::filesystem::path& path);
};

/// Fresh helper state bound to an RA/CA (stores their public keys).
HelperState init_helper(const TpmStore& store, const ra::RaAuthority& ra);

/// Defines the PIN NV object (empty record, PIN as authValue) and the retry
/// counter with its reset policy. PIN must be 4-12 decimal digits by default.
PinRecord provision_pin(TpmStore& store, HelperState& helper, ByteView pin);

/// Generates and defines the PUK (high-entropy, >= 128 bits). The returned
/// authValue is the only copy outside the store; display it once.
PukRecord provision_puk(TpmStore& store, HelperState& helper);

struct EnrollResult {
    EidCredential credential;
    ra::EnrollmentRecord record;
};
/// Compiles the signing policy, creates the key, enrolls it with the RA and
/// collects the stage licenses. window_ms only applies with revocation.
EnrollResult enroll_key(TpmStore& store, HelperState& helper, ra::RaAuthority& ra,
                        bool with_revocation = false, std::uint64_t revocation_window_ms = 0);

/// The full signing flow. On wrong PIN an attempt is consumed; on success
/// the counter is reset through its policy (PIN path) and returns to 0.
/// crash_point, when set, fires between counter undefine and redefine.
Bytes sign_with_pin(TpmStore& store, HelperState& helper, EidCredential& credential,
                    ByteView pin, const Digest& message_digest,
                    const std::function<void()>& crash_point = {});

void reset_counter_with_puk(TpmStore& store, HelperState& helper, ByteView puk,
                            const std::function<void()>& crash_point = {});

/// Recreates a counter lost to a crash between undefine and redefine.
/// Refuses when the platform-recreation knob is closed.
void repair_counter(TpmStore& store, HelperState& helper);

void change_pin(TpmStore& store, HelperState& helper, ByteView old_pin, ByteView new_pin);

void refresh_revocation_license(TpmStore& store, HelperState& helper, ra::RaAuthority& ra,
                                EidCredential& credential, std::uint64_t window_ms);

/// Symbols the policy compiler binds for this device: ra, pin, ctr, puk.
dsl::SymbolTable helper_symbols(const HelperState& helper);

/// Remaining PIN attempts before the counter blocks signing.
int remaining_attempts(TpmStore& store, const HelperState& helper);

EidCredential* find_credential(HelperState& helper, const std::string& id_prefix);

}  // namespace tpm2eid::eid
