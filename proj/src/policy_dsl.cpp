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

#include "tpm2eid/policy_dsl.hpp"

#include <charconv>
#include <sstream>

#include "tpm2eid/errors.hpp"

namespace tpm2eid::dsl {

namespace {

constexpr int kMaxOrDepth = 4;

// ---------------------------------------------------------------- tokenizer

enum class TokKind { ident, number, hexblob, string, punct, eof };

struct Token {
    TokKind kind = TokKind::eof;
    std::string text;
    SourceSpan span;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        skip_ws_and_comments();
        Token t;
        t.span = {line_, col_};
        if (pos_ >= src_.size()) {
            t.kind = TokKind::eof;
            return t;
        }
        char c = src_[pos_];
        if (c == '{' || c == '}' || c == ';' || c == ',' || c == '|') {
            t.kind = TokKind::punct;
            t.text = std::string(1, c);
            advance();
            return t;
        }
        if (c == '"') {
            advance();
            t.kind = TokKind::string;
            while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') {
                t.text.push_back(src_[pos_]);
                advance();
            }
            if (pos_ >= src_.size() || src_[pos_] != '"') {
                throw ParseError(t.span, "closing '\"'", "unterminated string");
            }
            advance();
            return t;
        }
        if (c == '0' && pos_ + 1 < src_.size() && (src_[pos_ + 1] == 'x' || src_[pos_ + 1] == 'X')) {
            t.kind = TokKind::hexblob;
            t.text = "0x";
            advance();
            advance();
            while (pos_ < src_.size() && std::isxdigit(static_cast<unsigned char>(src_[pos_]))) {
                t.text.push_back(src_[pos_]);
                advance();
            }
            if (t.text.size() == 2) {
                throw ParseError(t.span, "hex digits after 0x", t.text);
            }
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            t.kind = TokKind::number;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                t.text.push_back(src_[pos_]);
                advance();
            }
            return t;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            t.kind = TokKind::ident;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_' ||
                    src_[pos_] == '-')) {
                t.text.push_back(src_[pos_]);
                advance();
            }
            return t;
        }
        throw ParseError(t.span, "a statement or punctuation", std::string("'") + c + "'");
    }

private:
    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_ws_and_comments() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else {
                break;
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

// ------------------------------------------------------------------- parser

class Parser {
public:
    explicit Parser(std::string_view src) : lexer_(src) { bump(); }

    PolicyAst parse_policy() {
        expect_ident("policy");
        PolicyAst ast;
        ast.name = expect(TokKind::ident, "policy name").text;
        expect_punct("{");
        ast.statements = parse_statements(/*depth=*/0);
        expect_punct("}");
        if (tok_.kind != TokKind::eof) {
            throw ParseError(tok_.span, "end of input", describe(tok_));
        }
        return ast;
    }

private:
    StatementList parse_statements(int depth) {
        StatementList list;
        while (tok_.kind == TokKind::ident) {
            list.push_back(parse_statement(depth));
        }
        return list;
    }

    Statement parse_statement(int depth) {
        Statement stmt;
        stmt.span = tok_.span;
        const std::string kw = tok_.text;
        if (kw == "pcr") {
            bump();
            PcrAssert node;
            node.mask = parse_pcr_mask();
            expect_ident("expect");
            node.expected = parse_digest();
            expect_punct(";");
            stmt.node = node;
        } else if (kw == "nv") {
            bump();
            NvAssert node;
            node.target = parse_nv_target();
            node.op = parse_compare_op();
            node.operand = parse_operand();
            expect_punct(";");
            stmt.node = node;
        } else if (kw == "or") {
            bump();
            if (depth + 1 > kMaxOrDepth) {
                throw ParseError(stmt.span, "or nesting of at most 4", "deeper nesting");
            }
            expect_punct("{");
            OrBlock node;
            node.branches.push_back(parse_statements(depth + 1));
            while (tok_.kind == TokKind::punct && tok_.text == "|") {
                bump();
                node.branches.push_back(parse_statements(depth + 1));
            }
            for (const auto& branch : node.branches) {
                if (branch.empty()) {
                    throw ParseError(stmt.span, "a non-empty or branch", "empty branch");
                }
            }
            expect_punct("}");
            stmt.node = node;
        } else if (kw == "authorize") {
            bump();
            Authorize node;
            node.key_symbol = expect(TokKind::ident, "key symbol").text;
            node.ref_label = expect(TokKind::string, "policy ref label string").text;
            expect_punct(";");
            stmt.node = node;
        } else if (kw == "secret") {
            bump();
            Secret node;
            node.target = parse_nv_target();
            expect_punct(";");
            stmt.node = node;
        } else if (kw == "password") {
            bump();
            expect_punct(";");
            stmt.node = Password{};
        } else if (kw == "command") {
            bump();
            Token name = expect(TokKind::ident, "command name");
            auto code = command_code_from_dsl_name(name.text);
            if (!code) {
                throw ParseError(name.span, "sign, nv-undefine, nv-increment or nv-read",
                                 name.text);
            }
            expect_punct(";");
            stmt.node = CommandCode{*code};
        } else if (kw == "timer") {
            bump();
            TimerAssert node;
            node.op = parse_compare_op();
            node.reference_ms = parse_u64();
            expect_punct(";");
            stmt.node = node;
        } else {
            throw ParseError(stmt.span, "a statement keyword", kw);
        }
        return stmt;
    }

    std::uint32_t parse_pcr_mask() {
        std::uint32_t mask = 0;
        while (true) {
            Token t = expect(TokKind::number, "PCR index");
            std::uint64_t idx = to_u64(t);
            if (idx >= tpm::kPcrCount) {
                throw ParseError(t.span, "PCR index below 24", t.text);
            }
            mask |= 1u << idx;
            if (tok_.kind == TokKind::punct && tok_.text == ",") {
                bump();
            } else {
                break;
            }
        }
        return mask;
    }

    NvTarget parse_nv_target() {
        NvTarget target;
        if (tok_.kind == TokKind::ident) {
            target.symbol = tok_.text;
            bump();
        } else if (tok_.kind == TokKind::hexblob || tok_.kind == TokKind::number) {
            target.index = static_cast<std::uint32_t>(parse_u64());
        } else {
            throw ParseError(tok_.span, "NV symbol or index", describe(tok_));
        }
        return target;
    }

    CompareOp parse_compare_op() {
        Token t = expect(TokKind::ident, "comparison operator");
        auto op = compare_op_from_string(t.text);
        if (!op) {
            throw ParseError(t.span, "eq, neq, lt, le, gt or ge", t.text);
        }
        return *op;
    }

    // A decimal literal encodes as an 8-byte big-endian integer; a 0x literal
    // is taken as raw bytes.
    Bytes parse_operand() {
        if (tok_.kind == TokKind::number) {
            return be64(parse_u64());
        }
        if (tok_.kind == TokKind::hexblob) {
            Token t = tok_;
            bump();
            std::string digits = t.text.substr(2);
            if (digits.size() % 2 != 0) {
                throw ParseError(t.span, "an even number of hex digits", t.text);
            }
            return from_hex(digits);
        }
        throw ParseError(tok_.span, "an operand (decimal or 0x hex)", describe(tok_));
    }

    Digest parse_digest() {
        Token t = expect(TokKind::hexblob, "0x digest literal");
        std::string digits = t.text.substr(2);
        if (digits.size() != crypto::kDigestSize * 2) {
            throw ParseError(t.span, "a 64-hex-digit digest", t.text);
        }
        return Digest::from_hex(digits);
    }

    std::uint64_t parse_u64() {
        if (tok_.kind != TokKind::number && tok_.kind != TokKind::hexblob) {
            throw ParseError(tok_.span, "a number", describe(tok_));
        }
        Token t = tok_;
        bump();
        return to_u64(t);
    }

    static std::uint64_t to_u64(const Token& t) {
        std::uint64_t value = 0;
        std::string_view digits = t.text;
        int base = 10;
        if (t.kind == TokKind::hexblob) {
            digits = std::string_view(t.text).substr(2);
            base = 16;
        }
        auto [ptr, ec] =
            std::from_chars(digits.data(), digits.data() + digits.size(), value, base);
        if (ec != std::errc() || ptr != digits.data() + digits.size()) {
            throw ParseError(t.span, "a number within range", t.text);
        }
        return value;
    }

    static std::string describe(const Token& t) {
        switch (t.kind) {
            case TokKind::eof: return "end of input";
            case TokKind::string: return "\"" + t.text + "\"";
            default: return t.text;
        }
    }

    Token expect(TokKind kind, const std::string& what) {
        if (tok_.kind != kind) {
            throw ParseError(tok_.span, what, describe(tok_));
        }
        Token t = tok_;
        bump();
        return t;
    }

    void expect_ident(const std::string& word) {
        if (tok_.kind != TokKind::ident || tok_.text != word) {
            throw ParseError(tok_.span, "'" + word + "'", describe(tok_));
        }
        bump();
    }

    void expect_punct(const std::string& p) {
        if (tok_.kind != TokKind::punct || tok_.text != p) {
            throw ParseError(tok_.span, "'" + p + "'", describe(tok_));
        }
        bump();
    }

    void bump() { tok_ = lexer_.next(); }

    Lexer lexer_;
    Token tok_;
};

// ----------------------------------------------------------------- renderer

std::string mask_to_list(std::uint32_t mask) {
    std::string out;
    for (std::uint32_t i = 0; i < tpm::kPcrCount; ++i) {
        if (mask & (1u << i)) {
            if (!out.empty()) out += ",";
            out += std::to_string(i);
        }
    }
    return out;
}

std::string nv_target_text(const NvTarget& target) {
    if (target.symbol) return *target.symbol;
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%x", target.index.value_or(0));
    return buf;
}

void render_statements(std::ostringstream& out, const StatementList& stmts, int indent);

void render_statement(std::ostringstream& out, const Statement& stmt, int indent) {
    std::string pad(static_cast<std::size_t>(indent) * 4, ' ');
    if (const auto* pcr = std::get_if<PcrAssert>(&stmt.node)) {
        out << pad << "pcr " << mask_to_list(pcr->mask) << " expect 0x" << pcr->expected.hex()
            << ";\n";
    } else if (const auto* nv = std::get_if<NvAssert>(&stmt.node)) {
        out << pad << "nv " << nv_target_text(nv->target) << " " << to_string(nv->op) << " 0x"
            << to_hex(nv->operand) << ";\n";
    } else if (const auto* orb = std::get_if<OrBlock>(&stmt.node)) {
        out << pad << "or {\n";
        for (std::size_t i = 0; i < orb->branches.size(); ++i) {
            if (i > 0) out << pad << "|\n";
            render_statements(out, orb->branches[i], indent + 1);
        }
        out << pad << "}\n";
    } else if (const auto* auth = std::get_if<Authorize>(&stmt.node)) {
        out << pad << "authorize " << auth->key_symbol << " \"" << auth->ref_label << "\";\n";
    } else if (const auto* secret = std::get_if<Secret>(&stmt.node)) {
        out << pad << "secret " << nv_target_text(secret->target) << ";\n";
    } else if (std::get_if<Password>(&stmt.node)) {
        out << pad << "password;\n";
    } else if (const auto* code = std::get_if<CommandCode>(&stmt.node)) {
        out << pad << "command " << dsl_name_from_command_code(code->code).value_or("sign")
            << ";\n";
    } else if (const auto* timer = std::get_if<TimerAssert>(&stmt.node)) {
        out << pad << "timer " << to_string(timer->op) << " " << timer->reference_ms << ";\n";
    }
}

void render_statements(std::ostringstream& out, const StatementList& stmts, int indent) {
    for (const auto& stmt : stmts) {
        render_statement(out, stmt, indent);
    }
}

// ----------------------------------------------------------------- compiler

[[noreturn]] void compile_error(const std::string& reason) {
    throw TpmError(ErrorStage::command, "policy-compile", reason);
}

void apply_trial_step(TpmStore& st, std::uint32_t session, const PlanStep& step) {
    if (const auto* pcr = std::get_if<StepPcr>(&step.op)) {
        tpm::policy_pcr(st, session, pcr->mask, pcr->expected);
    } else if (const auto* nv = std::get_if<StepNv>(&step.op)) {
        tpm::policy_nv_trial(st, session, nv->name, nv->operand, nv->op);
    } else if (const auto* orstep = std::get_if<StepOr>(&step.op)) {
        tpm::policy_or(st, session, orstep->branch_digests);
    } else if (const auto* auth = std::get_if<StepAuthorize>(&step.op)) {
        tpm::policy_authorize_trial(st, session, auth->key_name, auth->policy_ref);
    } else if (const auto* secret = std::get_if<StepSecret>(&step.op)) {
        tpm::policy_secret_trial(st, session, secret->name);
    } else if (std::get_if<StepPassword>(&step.op)) {
        tpm::policy_password(st, session);
    } else if (const auto* code = std::get_if<StepCommandCode>(&step.op)) {
        tpm::policy_command_code(st, session, code->code);
    } else if (const auto* timer = std::get_if<StepTimer>(&step.op)) {
        tpm::policy_counter_timer(st, session, timer->reference_ms, timer->op);
    }
}

struct Compiler {
    const SymbolTable& symbols;
    TpmStore& store;
    std::vector<PlanStep> prefix;  // resolved steps from the policy start

    SymbolTable::NvEntry resolve_nv(const NvTarget& target) const {
        if (target.symbol) {
            auto it = symbols.nv.find(*target.symbol);
            if (it == symbols.nv.end()) {
                compile_error("unresolved NV symbol '" + *target.symbol + "'");
            }
            return it->second;
        }
        for (const auto& [name, entry] : symbols.nv) {
            if (entry.index == *target.index) return entry;
        }
        char buf[16];
        std::snprintf(buf, sizeof buf, "0x%x", *target.index);
        compile_error(std::string("unresolved NV index ") + buf);
    }

    ObjectName resolve_key(const std::string& symbol) const {
        auto it = symbols.keys.find(symbol);
        if (it == symbols.keys.end()) {
            compile_error("unresolved key symbol '" + symbol + "'");
        }
        return it->second;
    }

    std::vector<PlanStep> compile_list(const StatementList& stmts, std::uint32_t session) {
        std::vector<PlanStep> steps;
        for (const auto& stmt : stmts) {
            PlanStep step;
            step.digest_before = tpm::policy_get_digest(store, session);
            if (const auto* orb = std::get_if<OrBlock>(&stmt.node)) {
                StepOr orstep;
                std::size_t mark = prefix.size();
                for (const auto& branch : orb->branches) {
                    std::uint32_t sub = tpm::start_auth_session(store, tpm::SessionType::trial);
                    replay_trial(store, sub, prefix);
                    orstep.branches.push_back(compile_list(branch, sub));
                    prefix.resize(mark);
                    orstep.branch_digests.push_back(tpm::policy_get_digest(store, sub));
                    tpm::flush_session(store, sub);
                }
                step.op = std::move(orstep);
            } else if (const auto* pcr = std::get_if<PcrAssert>(&stmt.node)) {
                step.op = StepPcr{pcr->mask, pcr->expected};
            } else if (const auto* nv = std::get_if<NvAssert>(&stmt.node)) {
                auto entry = resolve_nv(nv->target);
                step.op = StepNv{entry.index, entry.name, nv->op, nv->operand};
            } else if (const auto* auth = std::get_if<Authorize>(&stmt.node)) {
                step.op = StepAuthorize{resolve_key(auth->key_symbol), auth->ref_label,
                                        symbols.policy_ref(auth->ref_label)};
            } else if (const auto* secret = std::get_if<Secret>(&stmt.node)) {
                auto entry = resolve_nv(secret->target);
                step.op = StepSecret{entry.index, entry.name};
            } else if (std::get_if<Password>(&stmt.node)) {
                step.op = StepPassword{};
            } else if (const auto* code = std::get_if<CommandCode>(&stmt.node)) {
                step.op = StepCommandCode{code->code};
            } else if (const auto* timer = std::get_if<TimerAssert>(&stmt.node)) {
                step.op = StepTimer{timer->op, timer->reference_ms};
            }
            apply_trial_step(store, session, step);
            step.digest_after = tpm::policy_get_digest(store, session);
            prefix.push_back(step);
            steps.push_back(std::move(step));
        }
        return steps;
    }
};

// ------------------------------------------------------------------ explain

void explain_steps(std::ostringstream& out, const std::vector<PlanStep>& steps,
                   const std::string& path_prefix);

std::string step_args(const PlanStep& step) {
    std::ostringstream out;
    if (const auto* pcr = std::get_if<StepPcr>(&step.op)) {
        out << "mask=" << mask_to_list(pcr->mask) << " expect=" << pcr->expected.hex();
    } else if (const auto* nv = std::get_if<StepNv>(&step.op)) {
        out << "name=" << nv->name.hex() << " " << to_string(nv->op) << " 0x"
            << to_hex(nv->operand);
    } else if (const auto* orstep = std::get_if<StepOr>(&step.op)) {
        out << "n=" << orstep->branch_digests.size();
    } else if (const auto* auth = std::get_if<StepAuthorize>(&step.op)) {
        out << "key=" << auth->key_name.hex() << " ref=" << to_string(ByteView(auth->policy_ref));
    } else if (const auto* secret = std::get_if<StepSecret>(&step.op)) {
        out << "name=" << secret->name.hex();
    } else if (std::get_if<StepPassword>(&step.op)) {
        out << "-";
    } else if (const auto* code = std::get_if<StepCommandCode>(&step.op)) {
        out << command_name(code->code);
    } else if (const auto* timer = std::get_if<StepTimer>(&step.op)) {
        out << to_string(timer->op) << " " << timer->reference_ms;
    }
    return out.str();
}

std::string step_command(const PlanStep& step) {
    if (std::get_if<StepPcr>(&step.op)) return "pcr";
    if (std::get_if<StepNv>(&step.op)) return "nv";
    if (std::get_if<StepOr>(&step.op)) return "or";
    if (std::get_if<StepAuthorize>(&step.op)) return "authorize";
    if (std::get_if<StepSecret>(&step.op)) return "secret";
    if (std::get_if<StepPassword>(&step.op)) return "password";
    if (std::get_if<StepCommandCode>(&step.op)) return "command";
    return "timer";
}

void explain_steps(std::ostringstream& out, const std::vector<PlanStep>& steps,
                   const std::string& path_prefix) {
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const PlanStep& step = steps[i];
        std::string path = path_prefix + std::to_string(i + 1);
        if (const auto* orstep = std::get_if<StepOr>(&step.op)) {
            // Branch rows first (chronological), then the collapse row.
            for (std::size_t b = 0; b < orstep->branches.size(); ++b) {
                explain_steps(out, orstep->branches[b],
                              path + "." + std::to_string(b + 1) + ".");
            }
        }
        out << path << "\t" << step_command(step) << "\t" << step_args(step) << "\t"
            << step.digest_after.hex() << "\n";
    }
}

}  // namespace

ParseError::ParseError(SourceSpan span, std::string expected, std::string found)
    : std::runtime_error("line " + std::to_string(span.line) + ", col " +
                         std::to_string(span.col) + ": expected " + expected + ", found " +
                         found),
      span_(span),
      expected_(std::move(expected)) {}

PolicyAst parse(std::string_view source) { return Parser(source).parse_policy(); }

std::string render(const PolicyAst& ast) {
    std::ostringstream out;
    out << "policy " << ast.name << " {\n";
    render_statements(out, ast.statements, 1);
    out << "}\n";
    return out.str();
}

Bytes SymbolTable::policy_ref(const std::string& label) const {
    if (device_id.empty()) return to_bytes(label);
    return to_bytes(label + ":" + device_id);
}

CompiledPolicy compile(const PolicyAst& ast, const SymbolTable& symbols, TpmStore& store) {
    Compiler compiler{symbols, store, {}};
    std::uint32_t session = tpm::start_auth_session(store, tpm::SessionType::trial);
    CompiledPolicy compiled;
    compiled.name = ast.name;
    try {
        compiled.plan = compiler.compile_list(ast.statements, session);
    } catch (...) {
        tpm::flush_session(store, session);
        throw;
    }
    compiled.trial_digest = tpm::policy_get_digest(store, session);
    tpm::flush_session(store, session);
    return compiled;
}

std::string explain(const CompiledPolicy& compiled) {
    std::ostringstream out;
    out << "0\tstart\t-\t" << Digest::zero().hex() << "\n";
    explain_steps(out, compiled.plan, "");
    return out.str();
}

namespace {
const PlanStep* find_authorize_in(const std::vector<PlanStep>& steps,
                                  const std::string& ref_label) {
    for (const auto& step : steps) {
        if (const auto* auth = std::get_if<StepAuthorize>(&step.op)) {
            if (auth->ref_label == ref_label) return &step;
        }
        if (const auto* orstep = std::get_if<StepOr>(&step.op)) {
            for (const auto& branch : orstep->branches) {
                if (const PlanStep* found = find_authorize_in(branch, ref_label)) return found;
            }
        }
    }
    return nullptr;
}
}  // namespace

const PlanStep* find_authorize(const CompiledPolicy& compiled, const std::string& ref_label) {
    return find_authorize_in(compiled.plan, ref_label);
}

const StepOr* find_top_level_or(const CompiledPolicy& compiled) {
    for (const auto& step : compiled.plan) {
        if (const auto* orstep = std::get_if<StepOr>(&step.op)) return orstep;
    }
    return nullptr;
}

void replay_trial(TpmStore& store, std::uint32_t session, const std::vector<PlanStep>& steps) {
    for (const auto& step : steps) {
        apply_trial_step(store, session, step);
    }
}

}  // namespace tpm2eid::dsl
