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
#include <string>

namespace tpm2eid {

// TPM 2.0 command codes (TPM_CC). These values enter every policy-digest
// update, so they are frozen here and pinned by the golden-digest corpus.
namespace cc {
constexpr std::uint32_t kNvUndefineSpace = 0x00000122;
constexpr std::uint32_t kNvDefineSpace = 0x0000012A;
constexpr std::uint32_t kNvIncrement = 0x00000134;
constexpr std::uint32_t kPolicyNv = 0x00000149;
constexpr std::uint32_t kNvRead = 0x0000014E;
constexpr std::uint32_t kPolicySecret = 0x00000151;
constexpr std::uint32_t kSign = 0x0000015D;
constexpr std::uint32_t kPolicyAuthorize = 0x0000016A;
constexpr std::uint32_t kPolicyAuthValue = 0x0000016B;
constexpr std::uint32_t kPolicyCommandCode = 0x0000016C;
constexpr std::uint32_t kPolicyCounterTimer = 0x0000016D;
constexpr std::uint32_t kPolicyOr = 0x00000171;
constexpr std::uint32_t kStartAuthSession = 0x00000176;
constexpr std::uint32_t kVerifySignature = 0x00000177;
constexpr std::uint32_t kPolicyPcr = 0x0000017F;
constexpr std::uint32_t kPolicyRestart = 0x00000180;
constexpr std::uint32_t kPolicyPassword = 0x0000018C;
}  // namespace cc

// TPM 2.0 comparison operators (TPM_EO), unsigned variants only. The
// two-byte value is hashed into PolicyNV / PolicyCounterTimer arguments.
enum class CompareOp : std::uint16_t {
    eq = 0x0000,
    neq = 0x0001,
    gt = 0x0003,
    lt = 0x0005,
    ge = 0x0007,
    le = 0x0009,
};

const char* to_string(CompareOp op);
std::optional<CompareOp> compare_op_from_string(std::string_view name);

/// Human-readable name for the command codes above ("TPM2_Sign", ...).
std::string command_name(std::uint32_t code);
/// Reverse lookup for the short names used by the policy language
/// ("sign", "nv-undefine", "nv-increment", "nv-read").
std::optional<std::uint32_t> command_code_from_dsl_name(std::string_view name);
std::optional<std::string> dsl_name_from_command_code(std::uint32_t code);

}  // namespace tpm2eid
