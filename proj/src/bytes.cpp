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

#include "tpm2eid/bytes.hpp"

#include <openssl/crypto.h>

#include <stdexcept>

namespace tpm2eid {

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";

int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}
}  // namespace

std::string to_hex(ByteView data) {
    std::string out;
    out.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        out.push_back(kHexDigits[b >> 4]);
        out.push_back(kHexDigits[b & 0x0F]);
    }
    return out;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) {
        throw std::invalid_argument("hex string has odd length");
    }
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = hex_nibble(hex[i]);
        int lo = hex_nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) {
            throw std::invalid_argument("invalid hex character");
        }
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

void put_be16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_be32(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) {
        out.push_back(static_cast<std::uint8_t>(v >> shift));
    }
}

void put_be64(Bytes& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) {
        out.push_back(static_cast<std::uint8_t>(v >> shift));
    }
}

Bytes be16(std::uint16_t v) {
    Bytes b;
    put_be16(b, v);
    return b;
}

Bytes be32(std::uint32_t v) {
    Bytes b;
    put_be32(b, v);
    return b;
}

Bytes be64(std::uint64_t v) {
    Bytes b;
    put_be64(b, v);
    return b;
}

std::uint64_t read_be64(ByteView data) {
    std::uint64_t v = 0;
    std::size_t start = data.size() > 8 ? data.size() - 8 : 0;
    for (std::size_t i = start; i < data.size(); ++i) {
        v = (v << 8) | data[i];
    }
    return v;
}

FieldWriter& FieldWriter::field(ByteView bytes) {
    put_be32(out_, static_cast<std::uint32_t>(bytes.size()));
    out_.insert(out_.end(), bytes.begin(), bytes.end());
    return *this;
}

FieldWriter& FieldWriter::field_u8(std::uint8_t v) {
    Bytes b{v};
    return field(b);
}

FieldWriter& FieldWriter::field_u16(std::uint16_t v) { return field(be16(v)); }
FieldWriter& FieldWriter::field_u32(std::uint32_t v) { return field(be32(v)); }
FieldWriter& FieldWriter::field_u64(std::uint64_t v) { return field(be64(v)); }

void secure_wipe(Bytes& b) {
    if (!b.empty()) {
        OPENSSL_cleanse(b.data(), b.size());
    }
    b.clear();
}

void secure_wipe(std::string& s) {
    if (!s.empty()) {
        OPENSSL_cleanse(s.data(), s.size());
    }
    s.clear();
}

}  // namespace tpm2eid
