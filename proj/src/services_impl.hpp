// Copyright 2026 The mros Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <optional>
#include <string>

#include "mros/services.hpp"
#include "node_core.hpp"

namespace mros::detail {

/// Resolves `token` as TIMED_OUT after `timeout` unless it completes first.
void arm_timeout(const std::shared_ptr<NodeCore>& core, const std::shared_ptr<TokenCore>& token,
                 Nanos timeout, std::function<void()> on_timeout);

/// Sends one SVC_REQ and resolves the returned token from the matching SVC_RESP.
CompletionToken issue_call(const std::shared_ptr<NodeCore>& core, const std::string& service,
                           TypedPayload request, std::optional<PayloadType> response_type,
                           std::optional<Nanos> timeout);

/// Valid name without the reserved "__" prefix.
void check_service_name(const std::string& name);

}  // namespace mros::detail
