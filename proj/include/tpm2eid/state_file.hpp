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
#include <string>

#include <json.hpp>

namespace tpm2eid {

// Every persistent file shares one container: a canonical-JSON envelope
// {magic "TPM2EA", version, hashAlg, kind, body, checksum} where checksum is
// the SHA-256 of the body's canonical serialization (compact dump, keys
// sorted). See docs/state-format.md.
constexpr const char* kStateMagic = "TPM2EA";
constexpr int kStateVersion = 1;

/// Serializes and writes an envelope. The body must be a JSON object.
void save_envelope(const std::filesystem::path& path, const std::string& kind,
                   const nlohmann::json& body);

/// Reads, checks magic/version/hash-alg/kind, verifies the checksum and
/// returns the body. Throws TpmError(state, ...) on any mismatch.
nlohmann::json load_envelope(const std::filesystem::path& path, const std::string& kind);

/// Envelope serialization without touching the filesystem (license records
/// travel as strings too).
std::string envelope_to_string(const std::string& kind, const nlohmann::json& body);
nlohmann::json envelope_from_string(const std::string& text, const std::string& kind);

}  // namespace tpm2eid
