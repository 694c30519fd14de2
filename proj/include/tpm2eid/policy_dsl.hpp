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

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tpm2eid/command_codes.hpp"
#include "tpm2eid/ea_engine.hpp"
#include "tpm2eid/tpm_store.hpp"

// A small declarative policy language: parsed to an AST, compiled against a
// symbol table into an ordered command plan, and trial-evaluated to the
// authPolicy digest. Grammar in docs/policy-language.md.
namespace tpm2eid::dsl {

using crypto::Digest;
using crypto::ObjectName;
using tpm::TpmStore;

struct SourceSpan {
    int line = 0;
    int col = 0;
};

/// Positioned syntax diagnostic; the parser never reports anything else.
class ParseError : public std::runtime_error {
public:
    ParseError(SourceSpan span, std::string expected, std::string found);
    SourceSpan span() const { return span_; }
    const std::string& expected() const { return expected_; }

private:
    SourceSpan span_;
    std::string expected_;
};

/// An NV reference in source: a declared symbol or a literal index.
struct NvTarget {
    std::optional<std::string> symbol;
    std::optional<std::uint32_t> index;
};

struct Statement;
using StatementList = std::vector<Statement>;

struct PcrAssert {
    std::uint32_t mask = 0;
    Digest expected;
};
struct NvAssert {
    NvTarget target;
    CompareOp op = CompareOp::eq;
    Bytes operand;
};
struct OrBlock {
    std::vector<StatementList> branches;
};
struct Authorize {
    std::string key_symbol;
    std::string ref_label;
};
struct Secret {
    NvTarget target;
};
struct Password {};
struct CommandCode {
    std::uint32_t code = 0;
};
struct TimerAssert {
    CompareOp op = CompareOp::lt;
    std::uint64_t reference_ms = 0;
};

struct Statement {
    std::variant<PcrAssert, NvAssert, OrBlock, Authorize, Secret, Password, CommandCode,
                 TimerAssert>
        node;
    SourceSpan span;
};

struct PolicyAst {
    std::string name;
    StatementList statements;
};

PolicyAst parse(std::string_view source);
/// Canonical pretty-printer; compile(parse(render(ast))) is a digest fixpoint.
std::string render(const PolicyAst& ast);

/// Binds symbolic references at compile time so one policy file serves many
/// devices. policyRef labels expand to "<label>:<device_id>" when a device
/// id is set.
struct SymbolTable {
    struct NvEntry {
        std::uint32_t index = 0;
        ObjectName name;
    };
    std::map<std::string, ObjectName> keys;
    std::map<std::string, NvEntry> nv;
    std::string device_id;

    Bytes policy_ref(const std::string& label) const;
};

struct PlanStep;

struct StepPcr {
    std::uint32_t mask = 0;
    Digest expected;
};
struct StepNv {
    std::uint32_t index = 0;
    ObjectName name;
    CompareOp op = CompareOp::eq;
    Bytes operand;
};
struct StepOr {
    std::vector<Digest> branch_digests;
    std::vector<std::vector<PlanStep>> branches;
};
struct StepAuthorize {
    ObjectName key_name;
    std::string ref_label;
    Bytes policy_ref;
};
struct StepSecret {
    std::uint32_t index = 0;
    ObjectName name;
};
struct StepPassword {};
struct StepCommandCode {
    std::uint32_t code = 0;
};
struct StepTimer {
    CompareOp op = CompareOp::lt;
    std::uint64_t reference_ms = 0;
};

struct PlanStep {
    std::variant<StepPcr, StepNv, StepOr, StepAuthorize, StepSecret, StepPassword,
                 StepCommandCode, StepTimer>
        op;
    Digest digest_before;
    Digest digest_after;
};

struct CompiledPolicy {
    std::string name;
    std::vector<PlanStep> plan;
    Digest trial_digest;
};

/// Trial evaluation borrows the given store for scratch trial sessions; the
/// store's persistent state is untouched.
CompiledPolicy compile(const PolicyAst& ast, const SymbolTable& symbols, TpmStore& store);

/// Step-by-step table of the hash chain: one tab-separated row per step
/// (nested or-branch rows carry a dotted path). Byte-stable across runs.
std::string explain(const CompiledPolicy& compiled);

/// First authorize step (depth-first) whose ref label matches; null if none.
const PlanStep* find_authorize(const CompiledPolicy& compiled, const std::string& ref_label);
/// First or step at the top level; null if none.
const StepOr* find_top_level_or(const CompiledPolicy& compiled);

/// Replays already-resolved steps into a trial session (used to rebuild
/// or-branch contexts and by tests).
void replay_trial(TpmStore& store, std::uint32_t session, const std::vector<PlanStep>& steps);

}  // namespace tpm2eid::dsl
