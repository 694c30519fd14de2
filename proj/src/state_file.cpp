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

#include "tpm2eid/state_file.hpp"

#include <fstream>
#include <sstream>

#include "tpm2eid/crypto.hpp"
#include "tpm2eid/errors.hpp"

namespace tpm2eid {

namespace {

std::string body_checksum(const nlohmann::json& body) {
    return crypto::hash(body.dump()).hex();
}

nlohmann::json parse_envelope(const std::string& text, const std::string& kind,
                              const std::string& what) {
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw TpmError(ErrorStage::state, what, "corrupt file: not a valid container");
    }
    if (doc.value("magic", "") != kStateMagic) {
        throw TpmError(ErrorStage::state, what, "bad magic");
    }
    if (doc.value("version", -1) != kStateVersion) {
        throw TpmError(ErrorStage::state, what, "unsupported version");
    }
    if (doc.value("hashAlg", -1) != static_cast<int>(crypto::kAlgSha256)) {
        throw TpmError(ErrorStage::state, what, "unsupported hash algorithm");
    }
    if (doc.value("kind", "") != kind) {
        throw TpmError(ErrorStage::state, what, "unexpected container kind");
    }
    if (!doc.contains("body") || !doc["body"].is_object()) {
        throw TpmError(ErrorStage::state, what, "missing body");
    }
    if (doc.value("checksum", "") != body_checksum(doc["body"])) {
        throw TpmError(ErrorStage::state, what, "checksum mismatch");
    }
    return doc["body"];
}

}  // namespace

std::string envelope_to_string(const std::string& kind, const nlohmann::json& body) {
    nlohmann::json doc;
    doc["magic"] = kStateMagic;
    doc["version"] = kStateVersion;
    doc["hashAlg"] = static_cast<int>(crypto::kAlgSha256);
    doc["kind"] = kind;
    doc["body"] = body;
    doc["checksum"] = body_checksum(body);
    return doc.dump();
}

nlohmann::json envelope_from_string(const std::string& text, const std::string& kind) {
    return parse_envelope(text, kind, kind);
}

void save_envelope(const std::filesystem::path& path, const std::string& kind,
                   const nlohmann::json& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw TpmError(ErrorStage::state, kind, "cannot open file for writing: " + path.string());
    }
    out << envelope_to_string(kind, body) << '\n';
    if (!out.flush()) {
        throw TpmError(ErrorStage::state, kind, "write failed: " + path.string());
    }
}

nlohmann::json load_envelope(const std::filesystem::path& path, const std::string& kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw TpmError(ErrorStage::state, kind, "cannot open file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_envelope(buf.str(), kind, kind);
}

}  // namespace tpm2eid
