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

#include "tpm2eid/ra_authority.hpp"

#include <algorithm>

#include "tpm2eid/ea_engine.hpp"
#include "tpm2eid/errors.hpp"
#include "tpm2eid/state_file.hpp"

namespace tpm2eid::ra {

namespace {
using nlohmann::json;

constexpr const char* kRegistryKind = "ra-registry";
constexpr const char* kLicenseKind = "license";
constexpr const char* kCertificateKind = "certificate";

json creation_to_json(const tpm::CreationData& c) {
    return {{"pcrMask", c.pcr_mask},
            {"pcrDigest", c.pcr_digest.hex()},
            {"authPolicy", c.auth_policy.hex()}};
}

tpm::CreationData creation_from_json(const json& j) {
    tpm::CreationData c;
    c.pcr_mask = j.at("pcrMask").get<std::uint32_t>();
    c.pcr_digest = Digest::from_hex(j.at("pcrDigest").get<std::string>());
    c.auth_policy = Digest::from_hex(j.at("authPolicy").get<std::string>());
    return c;
}

json keypair_to_json(const crypto::SignatureKeyPair& kp) {
    return {{"schemeId", kp.scheme_id},
            {"publicPart", to_hex(kp.public_part)},
            {"privatePart", to_hex(kp.private_part)}};
}

crypto::SignatureKeyPair keypair_from_json(const json& j) {
    crypto::SignatureKeyPair kp;
    kp.scheme_id = j.at("schemeId").get<std::uint16_t>();
    kp.public_part = from_hex(j.at("publicPart").get<std::string>());
    kp.private_part = from_hex(j.at("privatePart").get<std::string>());
    return kp;
}

}  // namespace

json AuthorizationLicense::to_json() const {
    json j = {{"approvedDigest", approved_digest.hex()},
              {"policyRef", to_hex(policy_ref)},
              {"signature", to_hex(signature)},
              {"raKeyName", ra_key_name.hex()}};
    if (not_after_ms) {
        j["notAfterMs"] = *not_after_ms;
    }
    return j;
}

AuthorizationLicense AuthorizationLicense::from_json(const json& j) {
    AuthorizationLicense lic;
    lic.approved_digest = Digest::from_hex(j.at("approvedDigest").get<std::string>());
    lic.policy_ref = from_hex(j.at("policyRef").get<std::string>());
    lic.signature = from_hex(j.at("signature").get<std::string>());
    lic.ra_key_name = ObjectName::from_hex(j.at("raKeyName").get<std::string>());
    if (j.contains("notAfterMs")) {
        lic.not_after_ms = j.at("notAfterMs").get<std::uint64_t>();
    }
    return lic;
}

Bytes Certificate::to_be_signed() const {
    FieldWriter w;
    w.field(to_bytes(subject))
        .field(public_key)
        .field_u16(scheme_id)
        .field_u64(not_before_ms)
        .field_u64(not_after_ms)
        .field_u8(tpm_resident ? 1 : 0);
    return w.take();
}

json Certificate::to_json() const {
    return {{"subject", subject},
            {"publicKey", to_hex(public_key)},
            {"schemeId", scheme_id},
            {"notBeforeMs", not_before_ms},
            {"notAfterMs", not_after_ms},
            {"tpmResident", tpm_resident},
            {"issuerSignature", to_hex(issuer_signature)}};
}

Certificate Certificate::from_json(const json& j) {
    Certificate cert;
    cert.subject = j.at("subject").get<std::string>();
    cert.public_key = from_hex(j.at("publicKey").get<std::string>());
    cert.scheme_id = j.at("schemeId").get<std::uint16_t>();
    cert.not_before_ms = j.at("notBeforeMs").get<std::uint64_t>();
    cert.not_after_ms = j.at("notAfterMs").get<std::uint64_t>();
    cert.tpm_resident = j.at("tpmResident").get<bool>();
    cert.issuer_signature = from_hex(j.at("issuerSignature").get<std::string>());
    return cert;
}

RaAuthority RaAuthority::create(crypto::DeterministicRng rng) {
    RaAuthority ra;
    ra.ra_key_ = crypto::derive_keypair(rng.generate(32));
    ra.ca_key_ = crypto::derive_keypair(rng.generate(32));
    return ra;
}

ObjectName RaAuthority::ra_key_name() const {
    return crypto::compute_object_name(
        tpm::external_key_public_area(ra_key_.public_part, ra_key_.scheme_id));
}

AuthorizationLicense RaAuthority::issue_license(const Digest& approved_digest,
                                                ByteView policy_ref) {
    if (policy_ref.empty()) {
        throw TpmError(ErrorStage::command, "issue-license", "empty policyRef");
    }
    AuthorizationLicense lic;
    lic.approved_digest = approved_digest;
    lic.policy_ref.assign(policy_ref.begin(), policy_ref.end());
    lic.ra_key_name = ra_key_name();
    Digest ahash = tpm::authorization_hash(approved_digest, policy_ref);
    lic.signature = crypto::sign(ra_key_, ahash.view());

    auto entry = std::make_pair(to_hex(lic.policy_ref), approved_digest.hex());
    if (std::find(issued_.begin(), issued_.end(), entry) == issued_.end()) {
        issued_.push_back(entry);
    }
    return lic;
}

AuthorizationLicense RaAuthority::issue_time_license(const Digest& base_digest_after_timer,
                                                     ByteView policy_ref,
                                                     std::uint64_t window_end_ms,
                                                     std::uint64_t now_ms) {
    if (window_end_ms <= now_ms) {
        throw TpmError(ErrorStage::command, "issue-time-license", "window end is in the past");
    }
    AuthorizationLicense lic = issue_license(base_digest_after_timer, policy_ref);
    lic.not_after_ms = window_end_ms;
    return lic;
}

EnrollmentRecord RaAuthority::enroll(const std::string& device_id, const ObjectName& key_name,
                                     ByteView public_key, const tpm::CreationData& creation,
                                     const Digest& expected_auth_policy, std::uint64_t now_ms) {
    if (!(creation.auth_policy == expected_auth_policy)) {
        throw TpmError(ErrorStage::command, "enroll",
                       "creationData authPolicy does not match the expected policy");
    }
    EnrollmentRecord record;
    record.cred_id = key_name.hex();
    record.device_id = device_id;
    record.key_name = key_name;
    record.creation = creation;

    Certificate cert;
    cert.subject = "eid:" + device_id + ":" + record.cred_id.substr(0, 16);
    cert.public_key.assign(public_key.begin(), public_key.end());
    cert.not_before_ms = now_ms;
    cert.not_after_ms = now_ms + kCertificateLifetimeMs;
    cert.tpm_resident = true;
    cert.issuer_signature = crypto::sign(ca_key_, cert.to_be_signed());
    record.certificate = std::move(cert);

    enrollments_.push_back(record);
    return record;
}

void RaAuthority::revoke(const std::string& cred_id) {
    for (auto& rec : enrollments_) {
        if (rec.cred_id == cred_id) {
            rec.revoked = true;
            return;
        }
    }
    throw TpmError(ErrorStage::command, "ra-revoke", "unknown credential id");
}

bool RaAuthority::is_revoked(const std::string& cred_id) const {
    const EnrollmentRecord* rec = find_enrollment(cred_id);
    return rec != nullptr && rec->revoked;
}

const EnrollmentRecord* RaAuthority::find_enrollment(const std::string& cred_id) const {
    for (const auto& rec : enrollments_) {
        if (rec.cred_id == cred_id) return &rec;
    }
    return nullptr;
}

void RaAuthority::save(const std::filesystem::path& path) const {
    json body;
    body["raKey"] = keypair_to_json(ra_key_);
    body["caKey"] = keypair_to_json(ca_key_);
    json enrollments = json::array();
    for (const auto& rec : enrollments_) {
        enrollments.push_back({{"credId", rec.cred_id},
                               {"deviceId", rec.device_id},
                               {"keyName", rec.key_name.hex()},
                               {"creation", creation_to_json(rec.creation)},
                               {"certificate", rec.certificate.to_json()},
                               {"revoked", rec.revoked}});
    }
    body["enrollments"] = enrollments;
    json issued = json::array();
    for (const auto& [ref, digest] : issued_) {
        issued.push_back({{"policyRef", ref}, {"approvedDigest", digest}});
    }
    body["issued"] = issued;
    save_envelope(path, kRegistryKind, body);
}

RaAuthority RaAuthority::load(const std::filesystem::path& path) {
    json body = load_envelope(path, kRegistryKind);
    try {
        RaAuthority ra;
        ra.ra_key_ = keypair_from_json(body.at("raKey"));
        ra.ca_key_ = keypair_from_json(body.at("caKey"));
        for (const auto& e : body.at("enrollments")) {
            EnrollmentRecord rec;
            rec.cred_id = e.at("credId").get<std::string>();
            rec.device_id = e.at("deviceId").get<std::string>();
            rec.key_name = ObjectName::from_hex(e.at("keyName").get<std::string>());
            rec.creation = creation_from_json(e.at("creation"));
            rec.certificate = Certificate::from_json(e.at("certificate"));
            rec.revoked = e.at("revoked").get<bool>();
            ra.enrollments_.push_back(std::move(rec));
        }
        for (const auto& i : body.at("issued")) {
            ra.issued_.emplace_back(i.at("policyRef").get<std::string>(),
                                    i.at("approvedDigest").get<std::string>());
        }
        return ra;
    } catch (const json::exception& e) {
        throw TpmError(ErrorStage::state, kRegistryKind,
                       std::string("malformed body: ") + e.what());
    }
}

bool verify_certificate(const Certificate& cert, ByteView ca_public_key) {
    return crypto::verify(ca_public_key, cert.to_be_signed(), cert.issuer_signature);
}

void save_license(const AuthorizationLicense& license, const std::filesystem::path& path) {
    save_envelope(path, kLicenseKind, license.to_json());
}

AuthorizationLicense load_license(const std::filesystem::path& path) {
    try {
        return AuthorizationLicense::from_json(load_envelope(path, kLicenseKind));
    } catch (const json::exception& e) {
        throw TpmError(ErrorStage::state, kLicenseKind, std::string("malformed body: ") + e.what());
    }
}

void save_certificate(const Certificate& cert, const std::filesystem::path& path) {
    save_envelope(path, kCertificateKind, cert.to_json());
}

Certificate load_certificate(const std::filesystem::path& path) {
    try {
        return Certificate::from_json(load_envelope(path, kCertificateKind));
    } catch (const json::exception& e) {
        throw TpmError(ErrorStage::state, kCertificateKind,
                       std::string("malformed body: ") + e.what());
    }
}

}  // namespace tpm2eid::ra
