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
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tpm2eid {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(ByteView b) {
    return std::string(b.begin(), b.end());
}

std::string to_hex(ByteView data);
/// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

void put_be16(Bytes& out, std::uint16_t v);
void put_be32(Bytes& out, std::uint32_t v);
void put_be64(Bytes& out, std::uint64_t v);

Bytes be16(std::uint16_t v);
Bytes be32(std::uint32_t v);
Bytes be64(std::uint64_t v);

/// Big-endian decode of up to 8 trailing bytes.
std::uint64_t read_be64(ByteView data);

/// Canonical object serialization: every field is emitted as a 4-byte
/// big-endian length followed by the field bytes, in call order.
class FieldWriter {
public:
    FieldWriter& field(ByteView bytes);
    FieldWriter& field_u8(std::uint8_t v);
    FieldWriter& field_u16(std::uint16_t v);
    FieldWriter& field_u32(std::uint32_t v);
    FieldWriter& field_u64(std::uint64_t v);
    const Bytes& bytes() const { return out_; }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

/// Best-effort erasure of secret material from memory.
void secure_wipe(Bytes& b);
void secure_wipe(std::string& s);

}  // namespace tpm2eid
