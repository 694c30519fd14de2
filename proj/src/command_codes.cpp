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

#include "tpm2eid/command_codes.hpp"

#include <array>
#include <cstdio>

namespace tpm2eid {

const char* to_string(CompareOp op) {
    switch (op) {
        case CompareOp::eq: return "eq";
        case CompareOp::neq: return "neq";
        case CompareOp::gt: return "gt";
        case CompareOp::lt: return "lt";
        case CompareOp::ge: return "ge";
        case CompareOp::le: return "le";
    }
    return "?";
}

std::optional<CompareOp> compare_op_from_string(std::string_view name) {
    if (name == "eq") return CompareOp::eq;
    if (name == "neq") return CompareOp::neq;
    if (name == "gt") return CompareOp::gt;
    if (name == "lt") return CompareOp::lt;
    if (name == "ge") return CompareOp::ge;
    if (name == "le") return CompareOp::le;
    return std::nullopt;
}

std::string command_name(std::uint32_t code) {
    switch (code) {
        case cc::kNvUndefineSpace: return "TPM2_NV_UndefineSpace";
        case cc::kNvDefineSpace: return "TPM2_NV_DefineSpace";
        case cc::kNvIncrement: return "TPM2_NV_Increment";
        case cc::kPolicyNv: return "TPM2_PolicyNV";
        case cc::kNvRead: return "TPM2_NV_Read";
        case cc::kPolicySecret: return "TPM2_PolicySecret";
        case cc::kSign: return "TPM2_Sign";
        case cc::kPolicyAuthorize: return "TPM2_PolicyAuthorize";
        case cc::kPolicyAuthValue: return "TPM2_PolicyAuthValue";
        case cc::kPolicyCommandCode: return "TPM2_PolicyCommandCode";
        case cc::kPolicyCounterTimer: return "TPM2_PolicyCounterTimer";
        case cc::kPolicyOr: return "TPM2_PolicyOR";
        case cc::kStartAuthSession: return "TPM2_StartAuthSession";
        case cc::kVerifySignature: return "TPM2_VerifySignature";
        case cc::kPolicyPcr: return "TPM2_PolicyPCR";
        case cc::kPolicyRestart: return "TPM2_PolicyRestart";
        case cc::kPolicyPassword: return "TPM2_PolicyPassword";
        default: {
            char buf[20];
            std::snprintf(buf, sizeof buf, "TPM_CC_%08x", code);
            return buf;
        }
    }
}

namespace {
struct DslName {
    const char* name;
    std::uint32_t code;
};
constexpr std::array<DslName, 4> kDslNames{{
    {"sign", cc::kSign},
    {"nv-undefine", cc::kNvUndefineSpace},
    {"nv-increment", cc::kNvIncrement},
    {"nv-read", cc::kNvRead},
}};
}  // namespace

std::optional<std::uint32_t> command_code_from_dsl_name(std::string_view name) {
    for (const auto& entry : kDslNames) {
        if (name == entry.name) return entry.code;
    }
    return std::nullopt;
}

std::optional<std::string> dsl_name_from_command_code(std::uint32_t code) {
    for (const auto& entry : kDslNames) {
        if (code == entry.code) return std::string(entry.name);
    }
    return std::nullopt;
}

}  // namespace tpm2eid
