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

#include <json.hpp>

#include "byte_io.hpp"
#include "mros/node.hpp"
#include "node_core.hpp"

namespace mros {

namespace {

bool parameter_type_allowed(PayloadType type) {
  return type == PayloadType::kBool || type == PayloadType::kInt64 ||
         type == PayloadType::kFloat64 || type == PayloadType::kStringUtf8;
}

}  // namespace

void check_parameter(const ParameterDecl& decl, const Value& value) {
  using Reason = ParameterError::Reason;
  const PayloadType got = type_of(value);
  if (got != decl.type) {
    throw ParameterError(Reason::kTypeMismatch, "parameter '" + decl.name + "' is " +
                                                    to_string(decl.type) + ", not " +
                                                    to_string(got));
  }
  if (!decl.range) return;
  const ParameterRange& r = *decl.range;
  auto out_of_range = [&](const std::string& shown) {
    throw ParameterError(Reason::kValidation,
                         "parameter '" + decl.name + "': " + shown + " is out of range");
  };
  if (const auto* i = std::get_if<std::int64_t>(&value)) {
    const double x = static_cast<double>(*i);
    if ((r.min && x < *r.min) || (r.max && x > *r.max)) out_of_range(std::to_string(*i));
  } else if (const auto* d = std::get_if<double>(&value)) {
    if ((r.min && *d < *r.min) || (r.max && *d > *r.max)) out_of_range(std::to_string(*d));
  } else if (const auto* s = std::get_if<std::string>(&value)) {
    if (r.max_length && s->size() > *r.max_length) {
      throw ParameterError(Reason::kValidation, "parameter '" + decl.name + "': length " +
                                                    std::to_string(s->size()) + " exceeds " +
                                                    std::to_string(*r.max_length));
    }
  }
}

Bytes encode_parameter_set(const std::string& name, const Value& value) {
  if (name.size() > 0xFFFF) throw std::invalid_argument("parameter name too long");
  const TypedPayload payload = encode_typed_payload(value);
  Bytes out;
  detail::put_be<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  detail::put_bytes(out, name);
  detail::put_u8(out, static_cast<std::uint8_t>(payload.type));
  detail::put_bytes(out, payload.bytes);
  return out;
}

std::pair<std::string, Value> decode_parameter_set(ByteView bytes) {
  detail::Reader r(bytes);
  if (!r.has(2)) throw CodecError(CodecErrc::kTruncated, "parameter set request");
  const auto len = r.be<std::uint16_t>();
  if (!r.has(std::size_t{len} + 1)) throw CodecError(CodecErrc::kTruncated, "parameter set request");
  const ByteView name = r.take(len);
  const std::uint8_t tag = r.u8();
  if (tag > static_cast<std::uint8_t>(PayloadType::kVideoChunk)) {
    throw CodecError(CodecErrc::kUnknownPayloadType, "parameter set request");
  }
  const ByteView rest = r.take(r.remaining());
  return {std::string(name.begin(), name.end()),
          decode_typed_payload(static_cast<PayloadType>(tag), rest)};
}

std::string parameter_service(const std::string& node_name, const std::string& operation) {
  return "__param/" + node_name + "/" + operation;
}

namespace detail {

void NodeCore::declare_parameter(const ParameterDecl& decl) {
  using Reason = ParameterError::Reason;
  if (decl.name.empty()) throw ParameterError(Reason::kInvalidDecl, "parameter name is empty");
  if (!parameter_type_allowed(decl.type)) {
    throw ParameterError(Reason::kInvalidDecl, "parameter '" + decl.name +
                                                   "': unsupported type " + to_string(decl.type));
  }
  if (decl.range && decl.type == PayloadType::kBool) {
    throw ParameterError(Reason::kInvalidDecl,
                         "parameter '" + decl.name + "': BOOL takes no range");
  }
  try {
    check_parameter(decl, decl.default_value);
  } catch (const ParameterError& e) {
    throw ParameterError(Reason::kInvalidDecl, std::string("default rejected: ") + e.what());
  }
  std::lock_guard lock(params_mutex_);
  if (!params_.emplace(decl.name, std::make_pair(decl, decl.default_value)).second) {
    throw ParameterError(Reason::kAlreadyDeclared,
                         "parameter '" + decl.name + "' already declared");
  }
}

Value NodeCore::get_parameter(const std::string& name) const {
  std::lock_guard lock(params_mutex_);
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ParameterError(ParameterError::Reason::kUnknown, "unknown parameter '" + name + "'");
  }
  return it->second.second;
}

void NodeCore::set_parameter(const std::string& name, const Value& value) {
  std::lock_guard lock(params_mutex_);
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ParameterError(ParameterError::Reason::kUnknown, "unknown parameter '" + name + "'");
  }
  check_parameter(it->second.first, value);
  it->second.second = value;
}

std::vector<std::string> NodeCore::list_parameters() const {
  std::lock_guard lock(params_mutex_);
  std::vector<std::string> names;
  for (const auto& [name, entry] : params_) names.push_back(name);
  return names;
}

void NodeCore::host_parameter_services() {
  params_entity_ = add_entity("params", 0);
  std::weak_ptr<NodeCore> weak = weak_from_this();
  for (const char* op : {"get", "set", "list"}) {
    const std::string service = parameter_service(name_, op);
    set_name_handler(FrameKind::kSvcReq, service, [weak, entity = params_entity_](Frame& req) {
      auto self = weak.lock();
      if (!self) return;
      self->executor().post(entity, [weak, req] {
        if (auto self = weak.lock()) self->serve_parameter_request(req);
      });
    });
    Frame adv;
    adv.kind = FrameKind::kAdvertise;
    adv.sequence = next_handle();
    adv.timestamp_send = wall_clock_ns();
    adv.topic = service;
    adv.payload = {static_cast<std::uint8_t>(AdvertiseRole::kService)};
    add_registration(adv.sequence, adv);
  }
}

void NodeCore::serve_parameter_request(const Frame& req) {
  const std::string op = req.topic.substr(req.topic.rfind('/') + 1);
  try {
    if (op == "get") {
      if (req.payload_type != PayloadType::kStringUtf8) {
        throw ParameterError(ParameterError::Reason::kTypeMismatch,
                             "get expects the parameter name as STRING_UTF8");
      }
      send(make_response(req, encode_typed_payload(get_parameter(error_text(req)))));
    } else if (op == "set") {
      if (req.payload_type != PayloadType::kBytes) {
        throw ParameterError(ParameterError::Reason::kTypeMismatch, "set expects BYTES");
      }
      auto [name, value] = decode_parameter_set(req.payload);
      set_parameter(name, value);
      send(make_response(req, encode_typed_payload(Value{true})));
    } else {
      const std::string json = nlohmann::json(list_parameters()).dump();
      send(make_response(req, encode_typed_payload(Value{json})));
    }
  } catch (const std::exception& e) {
    send(make_error_response(req, e.what()));
  }
}

}  // namespace detail

}  // namespace mros
