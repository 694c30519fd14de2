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
#include <optional>
#include <vector>

#include "tpm2eid/command_codes.hpp"
#include "tpm2eid/tpm_store.hpp"

// Policy sessions and the enhanced-authorization command set. Every policy
// command updates the session's policyDigest as a hash chain; the exact
// update formulas are documented in docs/policy-digests.md and pinned by the
// golden corpus under tests/golden/.
namespace tpm2eid::tpm {

constexpr std::size_t kPolicyOrMaxBranches = 8;

/// Proof that this store already verified a signature with a named key.
/// Forging one requires the store's proofValue.
struct VerificationTicket {
    ObjectName key_name;
    Digest message_digest;
    Bytes mac;
};

std::uint32_t start_auth_session(TpmStore& store, SessionType type,
                                 std::optional<ObjectName> bound_object = std::nullopt);
void flush_session(TpmStore& store, std::uint32_t session);
bool session_alive(const TpmStore& store, std::uint32_t session);
/// TPM2_PolicyGetDigest: the session's current running digest.
Digest policy_get_digest(const TpmStore& store, std::uint32_t session);

/// Combined assertion. With an expected composite: compare now, update and
/// snapshot the PCR update counter on match. Without one (policy sessions
/// only): fold the current composite and snapshot; validity is decided at
/// the gate. Trial sessions require the expected value and fold it as-is.
Digest policy_pcr(TpmStore& store, std::uint32_t session, std::uint32_t pcr_mask,
                  const std::optional<Digest>& expected = std::nullopt);

/// Immediate assertion: NV value `op` operand, unsigned big-endian.
Digest policy_nv(TpmStore& store, std::uint32_t session, std::uint32_t nv_index,
                 ByteView operand, CompareOp op);
/// Trial form that does not require the index to exist.
Digest policy_nv_trial(TpmStore& store, std::uint32_t session, const ObjectName& nv_name,
                       ByteView operand, CompareOp op);

/// Immediate assertion: current digest must be one of the branches; the
/// digest is then reset-and-extended over the whole list.
Digest policy_or(TpmStore& store, std::uint32_t session, const std::vector<Digest>& branches);

/// Deferred assertion: restricts the session to one command code.
Digest policy_command_code(TpmStore& store, std::uint32_t session, std::uint32_t code);

/// Deferred assertions: require the gated object's authValue at gate time,
/// as an HMAC proof (auth_value) or in the clear (password). Both extend the
/// digest with the same command code.
Digest policy_auth_value(TpmStore& store, std::uint32_t session);
Digest policy_password(TpmStore& store, std::uint32_t session);

/// Immediate assertion binding knowledge of another object's authValue; the
/// digest gains the referenced object's name.
struct ObjectRef {
    enum class Kind { nv, key };
    Kind kind = Kind::nv;
    std::uint32_t id = 0;
    static ObjectRef nv(std::uint32_t index) { return {Kind::nv, index}; }
    static ObjectRef key(std::uint32_t handle) { return {Kind::key, handle}; }
};
Digest policy_secret(TpmStore& store, std::uint32_t session, ObjectRef referenced,
                     ByteView provided_secret);
Digest policy_secret_trial(TpmStore& store, std::uint32_t session, const ObjectName& name);

/// Immediate assertion comparing the store clock against a reference value.
Digest policy_counter_timer(TpmStore& store, std::uint32_t session, std::uint64_t reference_ms,
                            CompareOp op);

/// Verifies a signature with a loaded external key and mints a ticket.
VerificationTicket verify_signature(TpmStore& store, std::uint32_t external_key_handle,
                                    const Digest& message_digest, ByteView signature);

/// External authorization: the ticket must prove a verified signature over
/// hash(current policyDigest || policy_ref) by the named key. On success the
/// digest is reset to the key name and extended with policy_ref.
Digest policy_authorize(TpmStore& store, std::uint32_t session, const ObjectName& key_name,
                        ByteView policy_ref, const VerificationTicket& ticket);
Digest policy_authorize_trial(TpmStore& store, std::uint32_t session, const ObjectName& key_name,
                              ByteView policy_ref);

void policy_restart(TpmStore& store, std::uint32_t session);

/// The use-time check. All must hold: digest equals the target authPolicy,
/// any gated command code matches, any PCR snapshot still matches, any
/// deferred authValue/password is supplied correctly. One-shot: the session
/// is flushed on success and on failure.
void gate(TpmStore& store, std::uint32_t session, std::uint32_t invoked_command_code,
          const Digest& target_auth_policy, ByteView target_auth_value,
          std::optional<ByteView> supplied_auth = std::nullopt,
          const Digest& context_digest = Digest::zero());

/// The HMAC proof a caller presents when the policy demanded PolicyAuthValue.
Bytes compute_auth_value_proof(ByteView auth_value, std::uint32_t session_handle,
                               std::uint32_t command_code, const Digest& context_digest);

/// TPM2_Sign through a satisfied policy session.
Bytes sign_gated(TpmStore& store, std::uint32_t key_handle, const Digest& message_digest,
                 std::uint32_t session, std::optional<ByteView> supplied_auth = std::nullopt);

/// aHash: what an external authority signs to approve a policy digest under
/// a policy reference.
Digest authorization_hash(const Digest& approved_digest, ByteView policy_ref);

/// The digest-update algebra as pure functions, for parties that compute
/// expected policy values outside a session (the helper and the RA).
/// These are the same formulas the session commands apply.
namespace policy_update {
Digest pcr(const Digest& old, std::uint32_t pcr_mask, const Digest& composite);
Digest nv(const Digest& old, ByteView operand, CompareOp op, const ObjectName& nv_name);
Digest or_reset(const std::vector<Digest>& branches);
Digest command_code(const Digest& old, std::uint32_t code);
Digest auth_value(const Digest& old);
Digest secret(const Digest& old, const ObjectName& name);
Digest counter_timer(const Digest& old, std::uint64_t reference_ms, CompareOp op);
Digest authorize(const ObjectName& key_name, ByteView policy_ref);
}  // namespace policy_update

}  // namespace tpm2eid::tpm
