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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpm2eid/crypto.hpp"
#include "tpm2eid/tpm_store.hpp"

// The off-device trusted third party: issues policy-authorization licenses
// (permanent and time-limited), performs a trust-on-first-use enrolment
// check, and fronts a desk-scale CA issuing eID certificates. RA and CA
// share a process but never a key pair.
namespace tpm2eid::ra {

using crypto::Digest;
using crypto::ObjectName;

/// RA-signed approval of a policy digest under a policy reference. The
/// signature covers hash(approvedDigest || policyRef), so one signature can
/// never be replayed under another reference.
struct AuthorizationLicense {
    Digest approved_digest;
    Bytes policy_ref;
    Bytes signature;
    ObjectName ra_key_name;
    std::optional<std::uint64_t> not_after_ms;  // bookkeeping echo for time licenses

    nlohmann::json to_json() const;
    static AuthorizationLicense from_json(const nlohmann::json& j);
};

/// Minimal self-describing certificate (deliberately not X.509). The issuer
/// signature covers the canonical serialization of all other fields.
struct Certificate {
    std::string subject;
    Bytes public_key;
    std::uint16_t scheme_id = crypto::kSchemeEd25519;
    std::uint64_t not_before_ms = 0;
    std::uint64_t not_after_ms = 0;
    bool tpm_resident = true;
    Bytes issuer_signature;

    Bytes to_be_signed() const;
    nlohmann::json to_json() const;
    static Certificate from_json(const nlohmann::json& j);
};

struct EnrollmentRecord {
    std::string cred_id;  // hex of the enrolled key name
    std::string device_id;
    ObjectName key_name;
    tpm::CreationData creation;
    Certificate certificate;
    bool revoked = false;
};

constexpr std::uint64_t kCertificateLifetimeMs = 10ull * 365 * 24 * 3600 * 1000;

class RaAuthority {
public:
    /// Fresh authority with its own RA and CA key pairs.
    static RaAuthority create(crypto::DeterministicRng rng);

    /// Permanent license. Registry-unique per (deviceId-qualified policyRef,
    /// approvedDigest); re-issuing an identical license returns the stored one.
    AuthorizationLicense issue_license(const Digest& approved_digest, ByteView policy_ref);

    /// Time-bound license over a chain that ends in a clock assertion.
    /// now_ms is the issuance clock (desk scale: the device clock).
    AuthorizationLicense issue_time_license(const Digest& base_digest_after_timer,
                                            ByteView policy_ref, std::uint64_t window_end_ms,
                                            std::uint64_t now_ms);

    /// Trust-on-first-use enrolment: checks that the key's creationData
    /// echoes the expected authPolicy, then issues a CA certificate binding
    /// the submitted public key.
    EnrollmentRecord enroll(const std::string& device_id, const ObjectName& key_name,
                            ByteView public_key, const tpm::CreationData& creation,
                            const Digest& expected_auth_policy, std::uint64_t now_ms);

    void revoke(const std::string& cred_id);
    bool is_revoked(const std::string& cred_id) const;
    const EnrollmentRecord* find_enrollment(const std::string& cred_id) const;
    const std::vector<EnrollmentRecord>& enrollments() const { return enrollments_; }

    const Bytes& ra_public_key() const { return ra_key_.public_part; }
    const Bytes& ca_public_key() const { return ca_key_.public_part; }
    /// Name of the RA key as the device sees it after TPM2_LoadExternal.
    ObjectName ra_key_name() const;

    void save(const std::filesystem::path& path) const;
    static RaAuthority load(const std::filesystem::path& path);

private:
    RaAuthority() = default;

    crypto::SignatureKeyPair ra_key_;
    crypto::SignatureKeyPair ca_key_;
    std::vector<EnrollmentRecord> enrollments_;
    // (policyRef hex, approvedDigest hex) pairs already issued.
    std::vector<std::pair<std::string, std::string>> issued_;
};

/// Checks a certificate against the CA public key.
bool verify_certificate(const Certificate& cert, ByteView ca_public_key);

/// License files travel as single-record containers.
void save_license(const AuthorizationLicense& license, const std::filesystem::path& path);
AuthorizationLicense load_license(const std::filesystem::path& path);
void save_certificate(const Certificate& cert, const std::filesystem::path& path);
Certificate load_certificate(const std::filesystem::path& path);

}  // namespace tpm2eid::ra
