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

// Flat re-computation of policy-digest chains, independent of the session
// engine: its own constants, its own serialization, raw SHA-256 calls. Used
// as the oracle the engine is checked against; do not share code with the
// implementation.

#include <openssl/sha.h>

#include <array>
#include <cstdint>
#include <variant>
#include <vector>

namespace chain_oracle {

using Block = std::array<std::uint8_t, 32>;
using Buf = std::vector<std::uint8_t>;

// Command codes restated from the TPM 2.0 tables on purpose.
constexpr std::uint32_t kCcPolicyNv = 0x00000149;
constexpr std::uint32_t kCcPolicySecret = 0x00000151;
constexpr std::uint32_t kCcPolicyAuthorize = 0x0000016A;
constexpr std::uint32_t kCcPolicyAuthValue = 0x0000016B;
constexpr std::uint32_t kCcPolicyCommandCode = 0x0000016C;
constexpr std::uint32_t kCcPolicyCounterTimer = 0x0000016D;
constexpr std::uint32_t kCcPolicyOr = 0x00000171;
constexpr std::uint32_t kCcPolicyPcr = 0x0000017F;

inline Block sha256(const Buf& data) {
    Block out{};
    SHA256(data.data(), data.size(), out.data());
    return out;
}

inline void put32(Buf& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}
inline void put16(Buf& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v));
}
inline void put64(Buf& b, std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}
inline void put_block(Buf& b, const Block& d) { b.insert(b.end(), d.begin(), d.end()); }
inline void put_bytes(Buf& b, const Buf& d) { b.insert(b.end(), d.begin(), d.end()); }

struct OpPcr {
    std::uint32_t mask;
    Block composite;
};
struct OpNv {
    Buf operand;
    std::uint16_t op;
    Buf nv_name_wire;  // algId || digest, 34 bytes
};
struct OpOr {
    std::vector<Block> branches;
};
struct OpCommandCode {
    std::uint32_t code;
};
struct OpAuthValue {};
struct OpSecret {
    Buf name_wire;
};
struct OpTimer {
    std::uint64_t reference_ms;
    std::uint16_t op;
};
struct OpAuthorize {
    Buf key_name_wire;
    Buf policy_ref;
};
struct OpRestart {};

using Op = std::variant<OpPcr, OpNv, OpOr, OpCommandCode, OpAuthValue, OpSecret, OpTimer,
                        OpAuthorize, OpRestart>;

inline Block step(const Block& old, const Op& op) {
    if (const auto* pcr = std::get_if<OpPcr>(&op)) {
        Buf b;
        put_block(b, old);
        put32(b, kCcPolicyPcr);
        put32(b, pcr->mask);
        put_block(b, pcr->composite);
        return sha256(b);
    }
    if (const auto* nv = std::get_if<OpNv>(&op)) {
        Buf args_in = nv->operand;
        put16(args_in, nv->op);
        Block args = sha256(args_in);
        Buf b;
        put_block(b, old);
        put32(b, kCcPolicyNv);
        put_block(b, args);
        put_bytes(b, nv->nv_name_wire);
        return sha256(b);
    }
    if (const auto* orv = std::get_if<OpOr>(&op)) {
        Buf b(32, 0);
        put32(b, kCcPolicyOr);
        for (const Block& d : orv->branches) put_block(b, d);
        return sha256(b);
    }
    if (const auto* cc = std::get_if<OpCommandCode>(&op)) {
        Buf b;
        put_block(b, old);
        put32(b, kCcPolicyCommandCode);
        put32(b, cc->code);
        return sha256(b);
    }
    if (std::get_if<OpAuthValue>(&op)) {
        Buf b;
        put_block(b, old);
        put32(b, kCcPolicyAuthValue);
        return sha256(b);
    }
    if (const auto* secret = std::get_if<OpSecret>(&op)) {
        Buf b;
        put_block(b, old);
        put32(b, kCcPolicySecret);
        put_bytes(b, secret->name_wire);
        return sha256(b);
    }
    if (const auto* timer = std::get_if<OpTimer>(&op)) {
        Buf args_in;
        put64(args_in, timer->reference_ms);
        put16(args_in, timer->op);
        Block args = sha256(args_in);
        Buf b;
        put_block(b, old);
        put32(b, kCcPolicyCounterTimer);
        put_block(b, args);
        return sha256(b);
    }
    if (const auto* auth = std::get_if<OpAuthorize>(&op)) {
        Buf b(32, 0);
        put32(b, kCcPolicyAuthorize);
        put_bytes(b, auth->key_name_wire);
        Block reset = sha256(b);
        Buf c;
        put_block(c, reset);
        put_bytes(c, auth->policy_ref);
        return sha256(c);
    }
    return Block{};  // OpRestart
}

/// The whole chain from the all-zero start value.
inline Block run(const std::vector<Op>& ops) {
    Block digest{};
    for (const Op& op : ops) {
        digest = step(digest, op);
    }
    return digest;
}

}  // namespace chain_oracle
