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

#include "tpm2eid/errors.hpp"

namespace tpm2eid {

const char* to_string(ErrorStage stage) {
    switch (stage) {
        case ErrorStage::immediate: return "immediate";
        case ErrorStage::deferred: return "deferred";
        case ErrorStage::gate: return "gate";
        case ErrorStage::command: return "command";
        case ErrorStage::state: return "state";
    }
    return "unknown";
}

TpmError::TpmError(ErrorStage stage, std::string command, std::string reason)
    : std::runtime_error(std::string(to_string(stage)) + ": " + command + ": " + reason),
      stage_(stage),
      command_(std::move(command)),
      reason_(std::move(reason)) {}

}  // namespace tpm2eid
