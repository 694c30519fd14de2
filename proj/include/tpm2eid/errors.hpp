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

#include <stdexcept>
#include <string>

namespace tpm2eid {

/// Where in a command's lifecycle a failure was detected.
///   immediate — a policy assertion evaluated and rejected on the spot
///   deferred  — a constraint recorded in the session conflicts
///   gate      — the final use-time authorization check failed
///   command   — an ordinary (non-policy) command failed
///   state     — persistence layer (corrupt file, version mismatch, lock)
enum class ErrorStage { immediate, deferred, gate, command, state };

const char* to_string(ErrorStage stage);

class TpmError : public std::runtime_error {
public:
    TpmError(ErrorStage stage, std::string command, std::string reason);

    ErrorStage stage() const { return stage_; }
    const std::string& command() const { return command_; }
    const std::string& reason() const { return reason_; }

private:
    ErrorStage stage_;
    std::string command_;
    std::string reason_;
};

}  // namespace tpm2eid
