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

#include "tpm2eid/eid_helper.hpp"

#include <algorithm>

#include "tpm2eid/ea_engine.hpp"
#include "tpm2eid/errors.hpp"
#include "tpm2eid/state_file.hpp"

namespace tpm2eid::eid {

namespace {

using dsl::PlanStep;
using dsl::StepAuthorize;
using dsl::StepCommandCode;
using dsl::StepNv;
using dsl::StepOr;
using dsl::StepPcr;
using dsl::StepSecret;
using dsl::StepTimer;
using nlohmann::json;

constexpr const char* kHelperKind = "helper";

struct WipeGuard {
    Bytes& buf;
    ~WipeGuard() { secure_wipe(buf); }
};

void check_pin_format(const PinPolicy& policy, ByteView pin, const char* command) {
    if (pin.size() < policy.min_len || pin.size() > policy.max_len) {
        throw TpmError(ErrorStage::command, command,
                       "PIN must be " + std::to_string(policy.min_len) + "-" +
                           std::to_string(policy.max_len) + " digits");
    }
    for (std::uint8_t c : pin) {
        if (c < '0' || c > '9') {
            throw TpmError(ErrorStage::command, command, "PIN must contain only digits");
        }
    }
}

dsl::Statement make_stmt(
    std::variant<dsl::PcrAssert, dsl::NvAssert, dsl::OrBlock, dsl::Authorize, dsl::Secret,
                 dsl::Password, dsl::CommandCode, dsl::TimerAssert>
        node) {
    dsl::Statement s;
    s.node = std::move(node);
    return s;
}

// pair k asserts the counter moves k -> k+1
dsl::Statement make_pair_or(const std::string& counter_symbol, int pairs) {
    dsl::OrBlock block;
    for (int k = 0; k < pairs; ++k) {
        dsl::StatementList branch;
        dsl::NvAssert first;
        first.target.symbol = counter_symbol;
        first.op = CompareOp::eq;
        first.operand = be64(static_cast<std::uint64_t>(k));
        branch.push_back(make_stmt(first));
        dsl::NvAssert second = first;
        second.operand = be64(static_cast<std::uint64_t>(k) + 1);
        branch.push_back(make_stmt(second));
        block.branches.push_back(std::move(branch));
    }
    return make_stmt(std::move(block));
}

dsl::Statement make_authorize(const std::string& ref_label) {
    return make_stmt(dsl::Authorize{"ra", ref_label});
}

dsl::Statement make_pcr(std::uint32_t mask, const Digest& expected) {
    return make_stmt(dsl::PcrAssert{mask, expected});
}

dsl::Statement make_secret(const std::string& symbol) {
    dsl::Secret s;
    s.target.symbol = symbol;
    return make_stmt(std::move(s));
}

dsl::Statement make_command(std::uint32_t code) { return make_stmt(dsl::CommandCode{code}); }

dsl::PolicyAst build_sign_policy(std::uint32_t pcr_mask, const Digest& pcr_expected,
                                 int max_attempts, bool with_revocation,
                                 std::uint64_t window_end_ms) {
    dsl::PolicyAst ast;
    ast.name = "eid_sign";
    ast.statements.push_back(make_pcr(pcr_mask, pcr_expected));
    ast.statements.push_back(make_authorize("platform"));
    ast.statements.push_back(make_pair_or("ctr", max_attempts));
    ast.statements.push_back(make_authorize("pinCount"));
    ast.statements.push_back(make_secret("pin"));
    ast.statements.push_back(make_authorize("pinEntry"));
    if (with_revocation) {
        ast.statements.push_back(make_stmt(dsl::TimerAssert{CompareOp::lt, window_end_ms}));
        ast.statements.push_back(make_authorize("revocation"));
    }
    ast.statements.push_back(make_command(cc::kSign));
    return ast;
}

dsl::PolicyAst build_reset_policy(std::uint32_t pcr_mask, const Digest& pcr_expected,
                                  int max_attempts) {
    dsl::PolicyAst ast;
    ast.name = "counter_reset";

    dsl::StatementList pin_path;
    pin_path.push_back(make_pcr(pcr_mask, pcr_expected));
    pin_path.push_back(make_authorize("ctrPlatform"));
    pin_path.push_back(make_pair_or("ctr", max_attempts + 1));
    pin_path.push_back(make_authorize("ctrPinCount"));
    pin_path.push_back(make_secret("pin"));
    pin_path.push_back(make_authorize("ctrPinEntry"));

    dsl::StatementList puk_path;
    puk_path.push_back(make_pcr(pcr_mask, pcr_expected));
    puk_path.push_back(make_authorize("ctrPlatform"));
    puk_path.push_back(make_secret("puk"));
    puk_path.push_back(make_authorize("ctrPuk"));

    dsl::OrBlock inner;
    inner.branches.push_back(std::move(pin_path));
    inner.branches.push_back(std::move(puk_path));

    dsl::StatementList undefine_path;
    undefine_path.push_back(make_stmt(std::move(inner)));
    undefine_path.push_back(make_authorize("ctrReset"));
    undefine_path.push_back(make_command(cc::kNvUndefineSpace));

    dsl::OrBlock outer;
    outer.branches.push_back(std::move(undefine_path));
    outer.branches.push_back({make_command(cc::kNvIncrement)});
    outer.branches.push_back({make_command(cc::kNvRead)});

    ast.statements.push_back(make_stmt(std::move(outer)));
    return ast;
}

// The counter's authPolicy must not depend on the counter's own name (the
// policy is an input to the name). Every path into the outer OR starts with
// a digest-resetting authorize, so the full reset policy collapses to this
// shape, which references nothing but the RA key.
dsl::PolicyAst build_reset_policy_shape() {
    dsl::PolicyAst ast;
    ast.name = "counter_reset_shape";

    dsl::OrBlock inner;
    inner.branches.push_back({make_authorize("ctrPinEntry")});
    inner.branches.push_back({make_authorize("ctrPuk")});

    dsl::StatementList undefine_path;
    undefine_path.push_back(make_stmt(std::move(inner)));
    undefine_path.push_back(make_authorize("ctrReset"));
    undefine_path.push_back(make_command(cc::kNvUndefineSpace));

    dsl::OrBlock outer;
    outer.branches.push_back(std::move(undefine_path));
    outer.branches.push_back({make_command(cc::kNvIncrement)});
    outer.branches.push_back({make_command(cc::kNvRead)});

    ast.statements.push_back(make_stmt(std::move(outer)));
    return ast;
}

tpm::NvAttributes counter_attributes() {
    tpm::NvAttributes attrs;
    attrs.is_counter = true;
    attrs.open_increment = true;
    attrs.open_read = true;
    return attrs;
}

// ----------------------------------------------------------------- walking

struct WalkContext {
    const std::map<std::string, ra::AuthorizationLicense>* licenses = nullptr;
    const Bytes* pin = nullptr;
    const Bytes* puk = nullptr;
    std::uint32_t pin_index = 0;
    std::uint32_t puk_index = 0;
    std::uint32_t counter_index = 0;
    std::uint32_t ra_handle = 0;
    ObjectName ra_name;
    bool password_walked = false;
};

const ra::AuthorizationLicense& require_license(const WalkContext& ctx, const std::string& label) {
    auto it = ctx.licenses->find(label);
    if (it == ctx.licenses->end()) {
        throw TpmError(ErrorStage::command, "TPM2_PolicyAuthorize", "missing license: " + label);
    }
    return it->second;
}

void apply_authorize(tpm::TpmStore& store, std::uint32_t session, const WalkContext& ctx,
                     const StepAuthorize& step) {
    const auto& lic = require_license(ctx, step.ref_label);
    Digest ahash = tpm::authorization_hash(lic.approved_digest, step.policy_ref);
    tpm::VerificationTicket ticket =
        tpm::verify_signature(store, ctx.ra_handle, ahash, lic.signature);
    tpm::policy_authorize(store, session, ctx.ra_name, step.policy_ref, ticket);
}

struct CounterPair {
    Bytes first;
    Bytes second;
};

// A retry block: every branch is a pair of eq-asserts against the counter.
std::optional<std::vector<CounterPair>> as_counter_pairs(const StepOr& orstep,
                                                         std::uint32_t counter_index) {
    std::vector<CounterPair> pairs;
    for (const auto& branch : orstep.branches) {
        if (branch.size() != 2) return std::nullopt;
        const auto* a = std::get_if<StepNv>(&branch[0].op);
        const auto* b = std::get_if<StepNv>(&branch[1].op);
        if (!a || !b || a->index != counter_index || b->index != counter_index ||
            a->op != CompareOp::eq || b->op != CompareOp::eq) {
            return std::nullopt;
        }
        pairs.push_back({a->operand, b->operand});
    }
    return pairs;
}

// Listing-style retry accounting: bind the current counter value, increment
// through the open path, bind the incremented value, collapse with OR.
void walk_counter_block(tpm::TpmStore& store, std::uint32_t session, const StepOr& orstep,
                        const WalkContext& ctx) {
    auto pairs = as_counter_pairs(orstep, ctx.counter_index);
    if (!pairs) {
        throw TpmError(ErrorStage::command, "sign", "unsupported or-construct in policy");
    }
    std::uint64_t n = read_be64(tpm::nv_read(store, ctx.counter_index, {}));
    const CounterPair* chosen = nullptr;
    for (const auto& pair : *pairs) {
        if (read_be64(pair.first) == n && read_be64(pair.second) == n + 1) {
            chosen = &pair;
            break;
        }
    }
    if (chosen == nullptr) {
        throw TpmError(ErrorStage::command, "sign", "attempts exhausted");
    }
    tpm::policy_nv(store, session, ctx.counter_index, chosen->first, CompareOp::eq);
    tpm::nv_increment(store, ctx.counter_index, {});
    tpm::policy_nv(store, session, ctx.counter_index, chosen->second, CompareOp::eq);
    tpm::policy_or(store, session, orstep.branch_digests);
}

void walk_steps(tpm::TpmStore& store, std::uint32_t session, const std::vector<PlanStep>& steps,
                WalkContext& ctx) {
    for (const auto& step : steps) {
        if (const auto* pcr = std::get_if<StepPcr>(&step.op)) {
            // Deferred form: the current PCR state is folded in; the license
            // decides whether that state is acceptable.
            tpm::policy_pcr(store, session, pcr->mask);
        } else if (const auto* nv = std::get_if<StepNv>(&step.op)) {
            tpm::policy_nv(store, session, nv->index, nv->operand, nv->op);
        } else if (const auto* orstep = std::get_if<StepOr>(&step.op)) {
            walk_counter_block(store, session, *orstep, ctx);
        } else if (const auto* auth = std::get_if<StepAuthorize>(&step.op)) {
            apply_authorize(store, session, ctx, *auth);
        } else if (const auto* secret = std::get_if<StepSecret>(&step.op)) {
            const Bytes* value = nullptr;
            if (secret->index == ctx.pin_index) value = ctx.pin;
            if (secret->index == ctx.puk_index) value = ctx.puk;
            if (value == nullptr) {
                throw TpmError(ErrorStage::command, "TPM2_PolicySecret",
                               "no secret available for referenced object");
            }
            tpm::policy_secret(store, session, tpm::ObjectRef::nv(secret->index), *value);
        } else if (std::get_if<dsl::StepPassword>(&step.op)) {
            tpm::policy_password(store, session);
            ctx.password_walked = true;
        } else if (const auto* code = std::get_if<StepCommandCode>(&step.op)) {
            tpm::policy_command_code(store, session, code->code);
        } else if (const auto* timer = std::get_if<StepTimer>(&step.op)) {
            const auto& lic = require_license(ctx, "revocation");
            if (!lic.not_after_ms) {
                throw TpmError(ErrorStage::command, "TPM2_PolicyCounterTimer",
                               "revocation license has no window");
            }
            try {
                tpm::policy_counter_timer(store, session, *lic.not_after_ms, timer->op);
            } catch (const TpmError&) {
                throw TpmError(ErrorStage::immediate, "TPM2_PolicyCounterTimer",
                               "timer assertion failed (license window elapsed)");
            }
        }
    }
}

dsl::CompiledPolicy compile_source(tpm::TpmStore& store, const HelperState& helper,
                                   const std::string& source) {
    return dsl::compile(dsl::parse(source), helper_symbols(helper), store);
}

const PinSetRecord& require_pin_set(const HelperState& helper, const char* command) {
    if (!helper.pin_set) {
        throw TpmError(ErrorStage::command, command, "PIN not provisioned");
    }
    return *helper.pin_set;
}

// Shared by the post-sign reset (PIN path) and the PUK reset. Undefines the
// counter through its policy and recreates it; crash_point fires in the
// non-atomic window.
void run_counter_reset(tpm::TpmStore& store, HelperState& helper, const Bytes* pin,
                       const Bytes* puk, const std::function<void()>& crash_point) {
    const PinSetRecord& ps = require_pin_set(helper, "reset-counter");
    if (ps.reset_licenses.empty()) {
        throw TpmError(ErrorStage::command, "reset-counter",
                       "reset licenses not provisioned (enroll first)");
    }
    if (!store.nv.contains(ps.counter_index)) {
        throw TpmError(ErrorStage::command, "reset-counter",
                       "counter missing; run repair-counter");
    }
    dsl::CompiledPolicy compiled = compile_source(store, helper, ps.reset_policy_source);

    const StepOr* outer = dsl::find_top_level_or(compiled);
    if (outer == nullptr || outer->branches.empty()) {
        throw TpmError(ErrorStage::command, "reset-counter", "malformed reset policy");
    }
    const std::vector<PlanStep>& undefine_path = outer->branches[0];
    const auto* inner = std::get_if<StepOr>(&undefine_path[0].op);
    if (inner == nullptr || inner->branches.size() != 2) {
        throw TpmError(ErrorStage::command, "reset-counter", "malformed reset policy");
    }
    const std::vector<PlanStep>& path = pin != nullptr ? inner->branches[0] : inner->branches[1];

    WalkContext ctx;
    ctx.licenses = &ps.reset_licenses;
    ctx.pin = pin;
    ctx.puk = puk;
    ctx.pin_index = ps.pin_index;
    ctx.puk_index = ps.puk_index;
    ctx.counter_index = ps.counter_index;
    ctx.ra_handle = tpm::load_external(store, helper.ra_public_key);
    ctx.ra_name = store.loaded_external.at(ctx.ra_handle).name;

    std::uint32_t session = tpm::start_auth_session(store, tpm::SessionType::policy);
    try {
        walk_steps(store, session, path, ctx);
        tpm::policy_or(store, session, inner->branch_digests);
        // Remaining steps of the undefine path: authorize(ctrReset) and the
        // command-code restriction.
        walk_steps(store, session,
                   std::vector<PlanStep>(undefine_path.begin() + 1, undefine_path.end()), ctx);
        tpm::policy_or(store, session, outer->branch_digests);
        tpm::nv_undefine_space(store, ps.counter_index, tpm::SessionAuth{session, std::nullopt});
    } catch (...) {
        tpm::flush_session(store, session);
        throw;
    }

    // The reset is two-phase; a crash here leaves no counter at all.
    if (crash_point) {
        crash_point();
    }

    nv_define_space(store, ps.counter_index, tpm::kCounterSize, counter_attributes(), {},
                    ps.counter_auth_policy);
}

}  // namespace

dsl::SymbolTable helper_symbols(const HelperState& helper) {
    dsl::SymbolTable symbols;
    symbols.device_id = helper.device_id;
    if (!helper.ra_public_key.empty()) {
        symbols.keys["ra"] = crypto::compute_object_name(
            tpm::external_key_public_area(helper.ra_public_key, crypto::kSchemeEd25519));
    }
    if (helper.pin_set) {
        symbols.nv["pin"] = {helper.pin_set->pin_index, helper.pin_set->pin_name};
        symbols.nv["ctr"] = {helper.pin_set->counter_index, helper.pin_set->counter_name};
        symbols.nv["puk"] = {helper.pin_set->puk_index, helper.pin_set->puk_name};
    }
    return symbols;
}

HelperState init_helper(const TpmStore& store, const ra::RaAuthority& ra) {
    HelperState helper;
    helper.device_id = store.device_id;
    helper.ra_public_key = ra.ra_public_key();
    helper.ca_public_key = ra.ca_public_key();
    return helper;
}

PinRecord provision_pin(TpmStore& store, HelperState& helper, ByteView pin) {
    check_pin_format(helper.pin_policy, pin, "pin-provision");
    if (helper.pin_set) {
        throw TpmError(ErrorStage::command, "pin-provision", "PIN already provisioned");
    }
    if (helper.ra_public_key.empty()) {
        throw TpmError(ErrorStage::command, "pin-provision", "helper not bound to an RA");
    }

    PinSetRecord ps;
    // An empty NV record whose authValue is the PIN; name stays stable when
    // the record is recreated with a new PIN.
    ps.pin_name = nv_define_space(store, ps.pin_index, 0, {}, pin, Digest::zero());

    dsl::CompiledPolicy shape =
        dsl::compile(build_reset_policy_shape(), helper_symbols(helper), store);
    ps.counter_auth_policy = shape.trial_digest;
    ps.counter_name = nv_define_space(store, ps.counter_index, tpm::kCounterSize,
                                      counter_attributes(), {}, ps.counter_auth_policy);
    ps.puk_name = crypto::compute_object_name(
        tpm::nv_public_area(ps.puk_index, 0, {}, Digest::zero()));

    dsl::PolicyAst reset_ast = build_reset_policy(
        helper.pcr_mask, pcr_composite(store, helper.pcr_mask), ps.max_attempts);
    ps.reset_policy_source = dsl::render(reset_ast);

    helper.pin_set = std::move(ps);

    // The full reset policy must collapse to the digest the counter was
    // created with; anything else is a construction bug.
    dsl::CompiledPolicy full =
        compile_source(store, helper, helper.pin_set->reset_policy_source);
    if (!(full.trial_digest == helper.pin_set->counter_auth_policy)) {
        throw TpmError(ErrorStage::command, "pin-provision",
                       "reset policy does not match counter authPolicy");
    }
    return PinRecord{helper.pin_set->pin_index, helper.pin_set->pin_name};
}

PukRecord provision_puk(TpmStore& store, HelperState& helper) {
    const PinSetRecord& ps = require_pin_set(helper, "puk-provision");
    if (store.nv.contains(ps.puk_index)) {
        throw TpmError(ErrorStage::command, "puk-provision",
                       "PUK already provisioned (it is shown exactly once)");
    }
    // 128 bits of generator output, presented as 32 hex digits.
    Bytes puk_value = to_bytes(to_hex(store.rng.generate(16)));
    ObjectName name = nv_define_space(store, ps.puk_index, 0, {}, puk_value, Digest::zero());
    if (!(name == ps.puk_name)) {
        throw TpmError(ErrorStage::command, "puk-provision", "PUK name mismatch");
    }
    return PukRecord{ps.puk_index, std::move(puk_value)};
}

EnrollResult enroll_key(TpmStore& store, HelperState& helper, ra::RaAuthority& ra,
                        bool with_revocation, std::uint64_t revocation_window_ms) {
    PinSetRecord& ps = const_cast<PinSetRecord&>(require_pin_set(helper, "enroll"));
    if (with_revocation && revocation_window_ms == 0) {
        throw TpmError(ErrorStage::command, "enroll",
                       "revocation enrolment needs an initial window");
    }
    std::uint64_t now = tpm::clock_read(store);
    std::uint64_t window_end = now + revocation_window_ms;

    dsl::PolicyAst ast =
        build_sign_policy(helper.pcr_mask, pcr_composite(store, helper.pcr_mask),
                          ps.max_attempts, with_revocation, window_end);
    std::string source = dsl::render(ast);
    dsl::CompiledPolicy compiled = compile_source(store, helper, source);

    tpm::KeyAttributes attrs;
    attrs.sign_capable = true;
    attrs.fixed_to_store = true;
    tpm::CreatedKey created =
        create_key(store, compiled.trial_digest, {}, attrs, helper.pcr_mask);
    const tpm::KeyObject& key = store.keys.at(created.handle);

    ra::EnrollmentRecord record = ra.enroll(helper.device_id, created.name, key.public_key,
                                            created.creation, compiled.trial_digest, now);

    EidCredential cred;
    cred.id = created.name.hex();
    cred.key_handle = created.handle;
    cred.certificate = record.certificate;
    cred.pin_nv_index = ps.pin_index;
    cred.counter_nv_index = ps.counter_index;
    cred.max_attempts = ps.max_attempts;
    cred.with_revocation = with_revocation;
    cred.policy_source = source;

    for (const char* label : {"platform", "pinCount", "pinEntry"}) {
        const dsl::PlanStep* step = dsl::find_authorize(compiled, label);
        if (step == nullptr) {
            throw TpmError(ErrorStage::command, "enroll", "policy lacks an authorize stage");
        }
        const auto& auth = std::get<StepAuthorize>(step->op);
        cred.licenses[label] = ra.issue_license(step->digest_before, auth.policy_ref);
    }
    if (with_revocation) {
        const dsl::PlanStep* step = dsl::find_authorize(compiled, "revocation");
        const auto& auth = std::get<StepAuthorize>(step->op);
        cred.licenses["revocation"] =
            ra.issue_time_license(step->digest_before, auth.policy_ref, window_end, now);
    }

    // Counter-reset licenses are per PIN set, issued on first enrolment.
    if (ps.reset_licenses.empty()) {
        dsl::CompiledPolicy reset = compile_source(store, helper, ps.reset_policy_source);
        for (const char* label :
             {"ctrPlatform", "ctrPinCount", "ctrPinEntry", "ctrPuk", "ctrReset"}) {
            const dsl::PlanStep* step = dsl::find_authorize(reset, label);
            if (step == nullptr) {
                throw TpmError(ErrorStage::command, "enroll", "reset policy lacks a stage");
            }
            const auto& auth = std::get<StepAuthorize>(step->op);
            ps.reset_licenses[label] = ra.issue_license(step->digest_before, auth.policy_ref);
        }
    }

    helper.credentials.push_back(cred);
    return EnrollResult{std::move(cred), std::move(record)};
}

Bytes sign_with_pin(TpmStore& store, HelperState& helper, EidCredential& credential,
                    ByteView pin, const Digest& message_digest,
                    const std::function<void()>& crash_point) {
    const PinSetRecord& ps = require_pin_set(helper, "sign");
    if (!store.nv.contains(ps.counter_index)) {
        throw TpmError(ErrorStage::command, "sign", "counter missing; run repair-counter");
    }
    // Friendly precheck; the policy itself remains authoritative.
    std::uint64_t n = read_be64(tpm::nv_read(store, ps.counter_index, {}));
    if (n >= static_cast<std::uint64_t>(credential.max_attempts)) {
        throw TpmError(ErrorStage::command, "sign", "attempts exhausted");
    }

    Bytes pin_copy(pin.begin(), pin.end());
    WipeGuard wipe{pin_copy};

    dsl::CompiledPolicy compiled = compile_source(store, helper, credential.policy_source);

    WalkContext ctx;
    ctx.licenses = &credential.licenses;
    ctx.pin = &pin_copy;
    ctx.pin_index = ps.pin_index;
    ctx.puk_index = ps.puk_index;
    ctx.counter_index = ps.counter_index;
    ctx.ra_handle = tpm::load_external(store, helper.ra_public_key);
    ctx.ra_name = store.loaded_external.at(ctx.ra_handle).name;

    std::uint32_t session = tpm::start_auth_session(store, tpm::SessionType::policy);
    Bytes signature;
    try {
        walk_steps(store, session, compiled.plan, ctx);
        std::optional<ByteView> supplied;
        if (ctx.password_walked) {
            supplied = ByteView(pin_copy);
        }
        signature = tpm::sign_gated(store, credential.key_handle, message_digest, session,
                                    supplied);
    } catch (const TpmError& e) {
        tpm::flush_session(store, session);
        if (e.command() == "TPM2_PolicySecret" && e.reason() == "secret mismatch") {
            int remaining = remaining_attempts(store, helper);
            throw TpmError(ErrorStage::immediate, "TPM2_PolicySecret",
                           "wrong PIN; remaining attempts: " + std::to_string(remaining));
        }
        throw;
    } catch (...) {
        tpm::flush_session(store, session);
        throw;
    }

    // Success: give the consumed attempt back by resetting the counter
    // through its own policy (PIN path).
    run_counter_reset(store, helper, &pin_copy, nullptr, crash_point);
    return signature;
}

void reset_counter_with_puk(TpmStore& store, HelperState& helper, ByteView puk,
                            const std::function<void()>& crash_point) {
    Bytes puk_copy(puk.begin(), puk.end());
    WipeGuard wipe{puk_copy};
    run_counter_reset(store, helper, nullptr, &puk_copy, crash_point);
}

void repair_counter(TpmStore& store, HelperState& helper) {
    const PinSetRecord& ps = require_pin_set(helper, "repair-counter");
    if (store.nv.contains(ps.counter_index)) {
        throw TpmError(ErrorStage::command, "repair-counter", "counter present; nothing to repair");
    }
    if (!helper.platform_recreation_open) {
        throw TpmError(ErrorStage::command, "repair-counter",
                       "platform policy forbids open recreation");
    }
    nv_define_space(store, ps.counter_index, tpm::kCounterSize, counter_attributes(), {},
                    ps.counter_auth_policy);
}

void change_pin(TpmStore& store, HelperState& helper, ByteView old_pin, ByteView new_pin) {
    const PinSetRecord& ps = require_pin_set(helper, "pin-change");
    check_pin_format(helper.pin_policy, new_pin, "pin-change");
    Bytes old_copy(old_pin.begin(), old_pin.end());
    WipeGuard wipe_old{old_copy};
    try {
        nv_undefine_space(store, ps.pin_index, tpm::PasswordAuth{old_copy});
    } catch (const TpmError&) {
        throw TpmError(ErrorStage::command, "pin-change", "wrong PIN");
    }
    ObjectName name = nv_define_space(store, ps.pin_index, 0, {}, new_pin, Digest::zero());
    if (!(name == ps.pin_name)) {
        throw TpmError(ErrorStage::command, "pin-change", "PIN record name changed");
    }
}

void refresh_revocation_license(TpmStore& store, HelperState& helper, ra::RaAuthority& ra,
                                EidCredential& credential, std::uint64_t window_ms) {
    if (!credential.with_revocation) {
        throw TpmError(ErrorStage::command, "license-refresh",
                       "credential not enrolled with revocation");
    }
    if (ra.is_revoked(credential.id)) {
        throw TpmError(ErrorStage::command, "license-refresh",
                       "credential revoked; refresh refused");
    }
    dsl::CompiledPolicy compiled = compile_source(store, helper, credential.policy_source);
    const dsl::PlanStep* timer_step = nullptr;
    for (const auto& step : compiled.plan) {
        if (std::get_if<StepTimer>(&step.op) != nullptr) {
            timer_step = &step;
            break;
        }
    }
    const dsl::PlanStep* auth_step = dsl::find_authorize(compiled, "revocation");
    if (timer_step == nullptr || auth_step == nullptr) {
        throw TpmError(ErrorStage::command, "license-refresh", "policy lacks a timer stage");
    }
    const auto& timer = std::get<StepTimer>(timer_step->op);
    const auto& auth = std::get<StepAuthorize>(auth_step->op);

    std::uint64_t now = tpm::clock_read(store);
    std::uint64_t window_end = now + window_ms;
    Digest base = timer_step->digest_before;
    Digest after_timer = tpm::policy_update::counter_timer(base, window_end, timer.op);
    credential.licenses["revocation"] =
        ra.issue_time_license(after_timer, auth.policy_ref, window_end, now);
}

int remaining_attempts(TpmStore& store, const HelperState& helper) {
    const PinSetRecord& ps = require_pin_set(helper, "sign");
    if (!store.nv.contains(ps.counter_index)) {
        return 0;
    }
    std::uint64_t n = read_be64(tpm::nv_read(store, ps.counter_index, {}));
    if (n >= static_cast<std::uint64_t>(ps.max_attempts)) {
        return 0;
    }
    return static_cast<int>(ps.max_attempts - n);
}

EidCredential* find_credential(HelperState& helper, const std::string& id_prefix) {
    EidCredential* found = nullptr;
    for (auto& cred : helper.credentials) {
        if (cred.id.starts_with(id_prefix)) {
            if (found != nullptr) {
                return nullptr;  // ambiguous
            }
            found = &cred;
        }
    }
    return found;
}

// -------------------------------------------------------------- persistence

namespace {

json licenses_to_json(const std::map<std::string, ra::AuthorizationLicense>& licenses) {
    json j = json::object();
    for (const auto& [label, lic] : licenses) {
        j[label] = lic.to_json();
    }
    return j;
}

std::map<std::string, ra::AuthorizationLicense> licenses_from_json(const json& j) {
    std::map<std::string, ra::AuthorizationLicense> out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        out[it.key()] = ra::AuthorizationLicense::from_json(it.value());
    }
    return out;
}

}  // namespace

void HelperState::save(const std::filesystem::path& path) const {
    json body;
    body["deviceId"] = device_id;
    body["raPublicKey"] = to_hex(ra_public_key);
    body["caPublicKey"] = to_hex(ca_public_key);
    body["pcrMask"] = pcr_mask;
    body["platformRecreationOpen"] = platform_recreation_open;
    body["pinPolicy"] = {{"minLen", pin_policy.min_len}, {"maxLen", pin_policy.max_len}};
    if (pin_set) {
        body["pinSet"] = {{"pinIndex", pin_set->pin_index},
                          {"counterIndex", pin_set->counter_index},
                          {"pukIndex", pin_set->puk_index},
                          {"pinName", pin_set->pin_name.hex()},
                          {"counterName", pin_set->counter_name.hex()},
                          {"pukName", pin_set->puk_name.hex()},
                          {"counterAuthPolicy", pin_set->counter_auth_policy.hex()},
                          {"maxAttempts", pin_set->max_attempts},
                          {"resetPolicySource", pin_set->reset_policy_source},
                          {"resetLicenses", licenses_to_json(pin_set->reset_licenses)}};
    }
    json creds = json::array();
    for (const auto& cred : credentials) {
        creds.push_back({{"id", cred.id},
                         {"keyHandle", cred.key_handle},
                         {"certificate", cred.certificate.to_json()},
                         {"pinNvIndex", cred.pin_nv_index},
                         {"counterNvIndex", cred.counter_nv_index},
                         {"licenses", licenses_to_json(cred.licenses)},
                         {"maxAttempts", cred.max_attempts},
                         {"withRevocation", cred.with_revocation},
                         {"policySource", cred.policy_source}});
    }
    body["credentials"] = creds;
    save_envelope(path, kHelperKind, body);
}

HelperState HelperState::load(const std::filesystem::path& path) {
    json body = load_envelope(path, kHelperKind);
    try {
        HelperState helper;
        helper.device_id = body.at("deviceId").get<std::string>();
        helper.ra_public_key = from_hex(body.at("raPublicKey").get<std::string>());
        helper.ca_public_key = from_hex(body.at("caPublicKey").get<std::string>());
        helper.pcr_mask = body.at("pcrMask").get<std::uint32_t>();
        helper.platform_recreation_open = body.at("platformRecreationOpen").get<bool>();
        helper.pin_policy.min_len = body.at("pinPolicy").at("minLen").get<std::size_t>();
        helper.pin_policy.max_len = body.at("pinPolicy").at("maxLen").get<std::size_t>();
        if (body.contains("pinSet")) {
            const auto& psj = body.at("pinSet");
            PinSetRecord ps;
            ps.pin_index = psj.at("pinIndex").get<std::uint32_t>();
            ps.counter_index = psj.at("counterIndex").get<std::uint32_t>();
            ps.puk_index = psj.at("pukIndex").get<std::uint32_t>();
            ps.pin_name = ObjectName::from_hex(psj.at("pinName").get<std::string>());
            ps.counter_name = ObjectName::from_hex(psj.at("counterName").get<std::string>());
            ps.puk_name = ObjectName::from_hex(psj.at("pukName").get<std::string>());
            ps.counter_auth_policy =
                Digest::from_hex(psj.at("counterAuthPolicy").get<std::string>());
            ps.max_attempts = psj.at("maxAttempts").get<int>();
            ps.reset_policy_source = psj.at("resetPolicySource").get<std::string>();
            ps.reset_licenses = licenses_from_json(psj.at("resetLicenses"));
            helper.pin_set = std::move(ps);
        }
        for (const auto& c : body.at("credentials")) {
            EidCredential cred;
            cred.id = c.at("id").get<std::string>();
            cred.key_handle = c.at("keyHandle").get<std::uint32_t>();
            cred.certificate = ra::Certificate::from_json(c.at("certificate"));
            cred.pin_nv_index = c.at("pinNvIndex").get<std::uint32_t>();
            cred.counter_nv_index = c.at("counterNvIndex").get<std::uint32_t>();
            cred.licenses = licenses_from_json(c.at("licenses"));
            cred.max_attempts = c.at("maxAttempts").get<int>();
            cred.with_revocation = c.at("withRevocation").get<bool>();
            cred.policy_source = c.at("policySource").get<std::string>();
            helper.credentials.push_back(std::move(cred));
        }
        return helper;
    } catch (const json::exception& e) {
        throw TpmError(ErrorStage::state, kHelperKind, std::string("malformed body: ") + e.what());
    }
}

}  // namespace tpm2eid::eid
