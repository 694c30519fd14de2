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

#include "tpm2eid/ea_engine.hpp"

#include <algorithm>

#include "tpm2eid/errors.hpp"

namespace tpm2eid::tpm {

namespace {

PolicySession& require_session(TpmStore& store, std::uint32_t handle, const char* command) {
    auto it = store.sessions.find(handle);
    if (it == store.sessions.end()) {
        throw TpmError(ErrorStage::command, command, "no such session");
    }
    return it->second;
}

const PolicySession& require_session(const TpmStore& store, std::uint32_t handle,
                                     const char* command) {
    auto it = store.sessions.find(handle);
    if (it == store.sessions.end()) {
        throw TpmError(ErrorStage::command, command, "no such session");
    }
    return it->second;
}

bool is_trial(const PolicySession& s) { return s.session_type == SessionType::trial; }

// policyDigest_new = H(policyDigest_old || commandCode || commandArgs)
Digest chain(const Digest& old, std::uint32_t command_code, ByteView args = {}) {
    Bytes buf(old.bytes.begin(), old.bytes.end());
    put_be32(buf, command_code);
    buf.insert(buf.end(), args.begin(), args.end());
    return crypto::hash(buf);
}

Bytes concat_digests(const std::vector<Digest>& digests) {
    Bytes out;
    for (const Digest& d : digests) {
        out.insert(out.end(), d.bytes.begin(), d.bytes.end());
    }
    return out;
}

// Unsigned big-endian comparison; the shorter operand is zero-padded on the
// left to a common width.
int compare_unsigned_be(ByteView a, ByteView b) {
    std::size_t width = std::max(a.size(), b.size());
    for (std::size_t i = 0; i < width; ++i) {
        std::uint8_t av = i + a.size() >= width ? a[i + a.size() - width] : 0;
        std::uint8_t bv = i + b.size() >= width ? b[i + b.size() - width] : 0;
        if (av != bv) return av < bv ? -1 : 1;
    }
    return 0;
}

bool evaluate_op(int cmp, CompareOp op) {
    switch (op) {
        case CompareOp::eq: return cmp == 0;
        case CompareOp::neq: return cmp != 0;
        case CompareOp::gt: return cmp > 0;
        case CompareOp::lt: return cmp < 0;
        case CompareOp::ge: return cmp >= 0;
        case CompareOp::le: return cmp <= 0;
    }
    return false;
}

Bytes ticket_mac_input(const ObjectName& key_name, const Digest& message_digest) {
    Bytes buf = to_bytes("VERIFIED");
    Bytes name = key_name.wire();
    buf.insert(buf.end(), name.begin(), name.end());
    buf.insert(buf.end(), message_digest.bytes.begin(), message_digest.bytes.end());
    return buf;
}

}  // namespace

namespace policy_update {

Digest pcr(const Digest& old, std::uint32_t pcr_mask, const Digest& composite) {
    Bytes args = be32(pcr_mask);
    args.insert(args.end(), composite.bytes.begin(), composite.bytes.end());
    return chain(old, cc::kPolicyPcr, args);
}

Digest nv(const Digest& old, ByteView operand, CompareOp op, const ObjectName& nv_name) {
    // args is itself a hash over the input operand and operator.
    Bytes op_buf(operand.begin(), operand.end());
    put_be16(op_buf, static_cast<std::uint16_t>(op));
    Digest args = crypto::hash(op_buf);
    Bytes tail(args.bytes.begin(), args.bytes.end());
    Bytes name = nv_name.wire();
    tail.insert(tail.end(), name.begin(), name.end());
    return chain(old, cc::kPolicyNv, tail);
}

Digest or_reset(const std::vector<Digest>& branches) {
    return chain(Digest::zero(), cc::kPolicyOr, concat_digests(branches));
}

Digest command_code(const Digest& old, std::uint32_t code) {
    return chain(old, cc::kPolicyCommandCode, be32(code));
}

Digest auth_value(const Digest& old) { return chain(old, cc::kPolicyAuthValue); }

Digest secret(const Digest& old, const ObjectName& name) {
    return chain(old, cc::kPolicySecret, name.wire());
}

Digest counter_timer(const Digest& old, std::uint64_t reference_ms, CompareOp op) {
    Bytes op_buf = be64(reference_ms);
    put_be16(op_buf, static_cast<std::uint16_t>(op));
    Digest args = crypto::hash(op_buf);
    return chain(old, cc::kPolicyCounterTimer, args.view());
}

Digest authorize(const ObjectName& key_name, ByteView policy_ref) {
    Digest reset = chain(Digest::zero(), cc::kPolicyAuthorize, key_name.wire());
    return crypto::extend(reset, policy_ref);
}

}  // namespace policy_update

std::uint32_t start_auth_session(TpmStore& store, SessionType type,
                                 std::optional<ObjectName> bound_object) {
    if (store.sessions.size() >= store.session_cap) {
        throw TpmError(ErrorStage::command, "StartAuthSession", "session slots exhausted");
    }
    PolicySession session;
    session.handle = store.next_session_handle++;
    session.session_type = type;
    session.bound_object = std::move(bound_object);
    std::uint32_t handle = session.handle;
    store.sessions.emplace(handle, std::move(session));
    return handle;
}

void flush_session(TpmStore& store, std::uint32_t session) { store.sessions.erase(session); }

bool session_alive(const TpmStore& store, std::uint32_t session) {
    return store.sessions.contains(session);
}

Digest policy_get_digest(const TpmStore& store, std::uint32_t session) {
    return require_session(store, session, "PolicyGetDigest").policy_digest;
}

Digest policy_pcr(TpmStore& store, std::uint32_t session, std::uint32_t pcr_mask,
                  const std::optional<Digest>& expected) {
    PolicySession& s = require_session(store, session, "PolicyPCR");
    if (is_trial(s)) {
        if (!expected) {
            throw TpmError(ErrorStage::immediate, "PolicyPCR",
                           "trial session requires an expected composite");
        }
        s.policy_digest = policy_update::pcr(s.policy_digest, pcr_mask, *expected);
        return s.policy_digest;
    }
    // A snapshot from an earlier PolicyPCR must still be current.
    if (s.pcr_counter_snapshot && *s.pcr_counter_snapshot != store.pcr_bank.update_counter) {
        throw TpmError(ErrorStage::immediate, "PolicyPCR", "PCR changed since snapshot");
    }
    Digest current = pcr_composite(store, pcr_mask);
    if (expected && !(current == *expected)) {
        throw TpmError(ErrorStage::immediate, "PolicyPCR", "PCR composite mismatch");
    }
    s.policy_digest = policy_update::pcr(s.policy_digest, pcr_mask, current);
    s.pcr_counter_snapshot = store.pcr_bank.update_counter;
    return s.policy_digest;
}

Digest policy_nv(TpmStore& store, std::uint32_t session, std::uint32_t nv_index, ByteView operand,
                 CompareOp op) {
    PolicySession& s = require_session(store, session, "PolicyNV");
    auto it = store.nv.find(nv_index);
    if (it == store.nv.end()) {
        throw TpmError(ErrorStage::immediate, "PolicyNV", "no such NV index");
    }
    const NvIndex& nv = it->second;
    if (!is_trial(s)) {
        if (!nv.attributes.open_read) {
            throw TpmError(ErrorStage::immediate, "PolicyNV", "NV index not readable");
        }
        if (!evaluate_op(compare_unsigned_be(nv.data, operand), op)) {
            throw TpmError(ErrorStage::immediate, "PolicyNV", "comparison false");
        }
    }
    s.policy_digest = policy_update::nv(s.policy_digest, operand, op, nv.name());
    return s.policy_digest;
}

Digest policy_nv_trial(TpmStore& store, std::uint32_t session, const ObjectName& nv_name,
                       ByteView operand, CompareOp op) {
    PolicySession& s = require_session(store, session, "PolicyNV");
    if (!is_trial(s)) {
        throw TpmError(ErrorStage::command, "PolicyNV", "name-only form needs a trial session");
    }
    s.policy_digest = policy_update::nv(s.policy_digest, operand, op, nv_name);
    return s.policy_digest;
}

Digest policy_or(TpmStore& store, std::uint32_t session, const std::vector<Digest>& branches) {
    PolicySession& s = require_session(store, session, "PolicyOR");
    if (branches.empty() || branches.size() > kPolicyOrMaxBranches) {
        throw TpmError(ErrorStage::immediate, "PolicyOR", "branch list must have 1 to 8 digests");
    }
    if (!is_trial(s)) {
        bool found = std::any_of(branches.begin(), branches.end(),
                                 [&](const Digest& d) { return d == s.policy_digest; });
        if (!found) {
            throw TpmError(ErrorStage::immediate, "PolicyOR", "current digest not in branch list");
        }
    }
    s.policy_digest = policy_update::or_reset(branches);
    return s.policy_digest;
}

Digest policy_command_code(TpmStore& store, std::uint32_t session, std::uint32_t code) {
    PolicySession& s = require_session(store, session, "PolicyCommandCode");
    if (!is_trial(s) && s.gated_command_code && *s.gated_command_code != code) {
        throw TpmError(ErrorStage::deferred, "PolicyCommandCode",
                       "conflicting command code already set");
    }
    s.policy_digest = policy_update::command_code(s.policy_digest, code);
    s.gated_command_code = code;
    return s.policy_digest;
}

Digest policy_auth_value(TpmStore& store, std::uint32_t session) {
    PolicySession& s = require_session(store, session, "PolicyAuthValue");
    s.policy_digest = policy_update::auth_value(s.policy_digest);
    s.is_auth_value_needed = true;
    s.is_password_needed = false;
    return s.policy_digest;
}

Digest policy_password(TpmStore& store, std::uint32_t session) {
    PolicySession& s = require_session(store, session, "PolicyPassword");
    // Same command code in the digest as PolicyAuthValue; only the deferred
    // comparison mode differs.
    s.policy_digest = policy_update::auth_value(s.policy_digest);
    s.is_password_needed = true;
    s.is_auth_value_needed = false;
    return s.policy_digest;
}

Digest policy_secret(TpmStore& store, std::uint32_t session, ObjectRef referenced,
                     ByteView provided_secret) {
    PolicySession& s = require_session(store, session, "PolicySecret");
    ObjectName name;
    ByteView auth_value;
    if (referenced.kind == ObjectRef::Kind::nv) {
        auto it = store.nv.find(referenced.id);
        if (it == store.nv.end()) {
            throw TpmError(ErrorStage::immediate, "PolicySecret", "no such NV index");
        }
        name = it->second.name();
        auth_value = ByteView(it->second.auth_value);
    } else {
        auto it = store.keys.find(referenced.id);
        if (it == store.keys.end()) {
            throw TpmError(ErrorStage::immediate, "PolicySecret", "no such key");
        }
        name = it->second.name();
        auth_value = ByteView(it->second.auth_value);
    }
    if (!is_trial(s)) {
        if (provided_secret.size() != auth_value.size() ||
            !std::equal(provided_secret.begin(), provided_secret.end(), auth_value.begin())) {
            throw TpmError(ErrorStage::immediate, "PolicySecret", "secret mismatch");
        }
    }
    s.policy_digest = policy_update::secret(s.policy_digest, name);
    return s.policy_digest;
}

Digest policy_secret_trial(TpmStore& store, std::uint32_t session, const ObjectName& name) {
    PolicySession& s = require_session(store, session, "PolicySecret");
    if (!is_trial(s)) {
        throw TpmError(ErrorStage::command, "PolicySecret",
                       "name-only form needs a trial session");
    }
    s.policy_digest = policy_update::secret(s.policy_digest, name);
    return s.policy_digest;
}

Digest policy_counter_timer(TpmStore& store, std::uint32_t session, std::uint64_t reference_ms,
                            CompareOp op) {
    PolicySession& s = require_session(store, session, "PolicyCounterTimer");
    if (!is_trial(s)) {
        std::uint64_t now = clock_read(store);
        int cmp = now < reference_ms ? -1 : now > reference_ms ? 1 : 0;
        if (!evaluate_op(cmp, op)) {
            throw TpmError(ErrorStage::immediate, "PolicyCounterTimer", "time comparison false");
        }
    }
    s.policy_digest = policy_update::counter_timer(s.policy_digest, reference_ms, op);
    return s.policy_digest;
}

VerificationTicket verify_signature(TpmStore& store, std::uint32_t external_key_handle,
                                    const Digest& message_digest, ByteView signature) {
    auto it = store.loaded_external.find(external_key_handle);
    if (it == store.loaded_external.end()) {
        throw TpmError(ErrorStage::command, "VerifySignature", "no such loaded key");
    }
    if (!crypto::verify(it->second.public_key, message_digest.view(), signature)) {
        throw TpmError(ErrorStage::command, "VerifySignature", "signature invalid");
    }
    VerificationTicket ticket;
    ticket.key_name = it->second.name;
    ticket.message_digest = message_digest;
    ticket.mac =
        crypto::hmac_sha256(store.proof_value, ticket_mac_input(ticket.key_name, message_digest));
    return ticket;
}

Digest policy_authorize(TpmStore& store, std::uint32_t session, const ObjectName& key_name,
                        ByteView policy_ref, const VerificationTicket& ticket) {
    PolicySession& s = require_session(store, session, "PolicyAuthorize");
    if (is_trial(s)) {
        return policy_authorize_trial(store, session, key_name, policy_ref);
    }
    if (!(ticket.key_name == key_name)) {
        throw TpmError(ErrorStage::immediate, "PolicyAuthorize", "key name mismatch");
    }
    Digest expected_ahash = authorization_hash(s.policy_digest, policy_ref);
    if (!(ticket.message_digest == expected_ahash)) {
        throw TpmError(ErrorStage::immediate, "PolicyAuthorize",
                       "ticket does not approve the current digest under this policyRef");
    }
    Bytes expected_mac =
        crypto::hmac_sha256(store.proof_value, ticket_mac_input(key_name, ticket.message_digest));
    if (expected_mac != ticket.mac) {
        throw TpmError(ErrorStage::immediate, "PolicyAuthorize", "ticket MAC invalid");
    }
    s.policy_digest = policy_update::authorize(key_name, policy_ref);
    return s.policy_digest;
}

Digest policy_authorize_trial(TpmStore& store, std::uint32_t session, const ObjectName& key_name,
                              ByteView policy_ref) {
    PolicySession& s = require_session(store, session, "PolicyAuthorize");
    s.policy_digest = policy_update::authorize(key_name, policy_ref);
    return s.policy_digest;
}

void policy_restart(TpmStore& store, std::uint32_t session) {
    PolicySession& s = require_session(store, session, "PolicyRestart");
    s.policy_digest = Digest::zero();
    s.gated_command_code.reset();
    s.pcr_counter_snapshot.reset();
    s.is_auth_value_needed = false;
    s.is_password_needed = false;
}

Bytes compute_auth_value_proof(ByteView auth_value, std::uint32_t session_handle,
                               std::uint32_t command_code, const Digest& context_digest) {
    Bytes msg = be32(session_handle);
    put_be32(msg, command_code);
    msg.insert(msg.end(), context_digest.bytes.begin(), context_digest.bytes.end());
    return crypto::hmac_sha256(auth_value, msg);
}

void gate(TpmStore& store, std::uint32_t session, std::uint32_t invoked_command_code,
          const Digest& target_auth_policy, ByteView target_auth_value,
          std::optional<ByteView> supplied_auth, const Digest& context_digest) {
    PolicySession& s = require_session(store, session, "Gate");
    // One-shot either way: take a copy and drop the slot before checking.
    PolicySession snapshot = s;
    flush_session(store, session);

    if (snapshot.session_type == SessionType::trial) {
        throw TpmError(ErrorStage::gate, command_name(invoked_command_code),
                       "trial session cannot authorize");
    }
    if (!(snapshot.policy_digest == target_auth_policy)) {
        throw TpmError(ErrorStage::gate, command_name(invoked_command_code),
                       "policyDigest does not match authPolicy");
    }
    if (snapshot.gated_command_code && *snapshot.gated_command_code != invoked_command_code) {
        throw TpmError(ErrorStage::gate, command_name(invoked_command_code),
                       "command code does not match session restriction");
    }
    if (snapshot.pcr_counter_snapshot &&
        *snapshot.pcr_counter_snapshot != store.pcr_bank.update_counter) {
        throw TpmError(ErrorStage::gate, command_name(invoked_command_code),
                       "PCR changed between check and use");
    }
    if (snapshot.is_auth_value_needed) {
        Bytes expected = compute_auth_value_proof(target_auth_value, snapshot.handle,
                                                  invoked_command_code, context_digest);
        if (!supplied_auth || expected.size() != supplied_auth->size() ||
            !std::equal(expected.begin(), expected.end(), supplied_auth->begin())) {
            throw TpmError(ErrorStage::gate, command_name(invoked_command_code),
                           "authValue proof mismatch");
        }
    } else if (snapshot.is_password_needed) {
        if (!supplied_auth || supplied_auth->size() != target_auth_value.size() ||
            !std::equal(supplied_auth->begin(), supplied_auth->end(),
                        target_auth_value.begin())) {
            throw TpmError(ErrorStage::gate, command_name(invoked_command_code),
                           "password mismatch");
        }
    }
}

Bytes sign_gated(TpmStore& store, std::uint32_t key_handle, const Digest& message_digest,
                 std::uint32_t session, std::optional<ByteView> supplied_auth) {
    auto it = store.keys.find(key_handle);
    if (it == store.keys.end()) {
        throw TpmError(ErrorStage::command, "Sign", "no such key");
    }
    const KeyObject& key = it->second;
    if (!key.attributes.sign_capable) {
        throw TpmError(ErrorStage::command, "Sign", "key is not sign-capable");
    }
    gate(store, session, cc::kSign, key.auth_policy, key.auth_value, supplied_auth,
         message_digest);
    crypto::SignatureKeyPair kp;
    kp.scheme_id = key.scheme_id;
    kp.public_part = key.public_key;
    kp.private_part = key.private_key;
    return crypto::sign(kp, message_digest.view());
}

Digest authorization_hash(const Digest& approved_digest, ByteView policy_ref) {
    return crypto::extend(approved_digest, policy_ref);
}

}  // namespace tpm2eid::tpm
