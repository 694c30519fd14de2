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

#include <filesystem>
#include <random>
#include <string>

#include "chain_oracle.hpp"
#include "tpm2eid/crypto.hpp"

namespace test_util {

inline std::filesystem::path source_dir() { return TPM2EID_SOURCE_DIR; }

inline std::filesystem::path fixture(const std::string& name) {
    return source_dir() / "tests" / "fixtures" / name;
}

inline std::filesystem::path golden(const std::string& name) {
    return source_dir() / "tests" / "golden" / name;
}

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("tpm2eid-test-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline chain_oracle::Block to_block(const tpm2eid::crypto::Digest& d) {
    chain_oracle::Block b{};
    std::copy(d.bytes.begin(), d.bytes.end(), b.begin());
    return b;
}

inline chain_oracle::Buf to_buf(tpm2eid::ByteView v) {
    return chain_oracle::Buf(v.begin(), v.end());
}

inline tpm2eid::crypto::Digest from_block(const chain_oracle::Block& b) {
    tpm2eid::crypto::Digest d;
    std::copy(b.begin(), b.end(), d.bytes.begin());
    return d;
}

inline std::string block_hex(const chain_oracle::Block& b) {
    return tpm2eid::to_hex(tpm2eid::ByteView(b.data(), b.size()));
}

}  // namespace test_util
