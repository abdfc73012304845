// Copyright 2026 The mpstat-twin Authors
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


// Line-oriented datagram codec for the control plane. One ASCII command
// per datagram, LF-terminated, at most 512 bytes. Currents travel as
// integer picoamps and voltages as integer millivolts. PROTOCOL.md holds
// the grammar.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace mpstat {

inline constexpr std::size_t kMaxDatagram = 512;
inline constexpr std::uint16_t kDefaultPort = 9750;
inline constexpr std::size_t kMaxNameLength = 64;

enum class Verb { Ping, Info, Set, Sw, GetI, GetV, Cal, Run, Stop };

/// Stable numeric error codes.
enum class ErrorCode : int { Parse = 1, Range = 2, State = 3, Unsupported = 4 };

const char* to_string(Verb v);

struct Request {
  Verb verb = Verb::Ping;
  int channel = 0;  ///< SET, SW, GETI, GETV
  int value = 0;    ///< SET millivolts, SW 0|1
  std::string name; ///< RUN

  static Request ping() { return {Verb::Ping, 0, 0, {}}; }
  static Request info() { return {Verb::Info, 0, 0, {}}; }
  static Request set(int ch, int mv) { return {Verb::Set, ch, mv, {}}; }
  static Request sw(int ch, bool closed) { return {Verb::Sw, ch, closed ? 1 : 0, {}}; }
  static Request get_current(int ch) { return {Verb::GetI, ch, 0, {}}; }
  static Request get_voltage(int ch) { return {Verb::GetV, ch, 0, {}}; }
  static Request calibrate() { return {Verb::Cal, 0, 0, {}}; }
  static Request run(std::string name) { return {Verb::Run, 0, 0, std::move(name)}; }
  static Request stop() { return {Verb::Stop, 0, 0, {}}; }

  bool operator==(const Request&) const = default;
};

struct Reply {
  bool ok = true;
  std::string payload;  ///< OK payload, may be empty
  ErrorCode code = ErrorCode::Parse;
  std::string text;     ///< ERR text

  static Reply success(std::string payload = {}) { return {true, std::move(payload), ErrorCode::Parse, {}}; }
  static Reply error(ErrorCode code, std::string text) { return {false, {}, code, std::move(text)}; }

  bool operator==(const Reply&) const = default;
};

/// Either a request or the error reply to send back.
struct Decoded {
  std::optional<Request> request;
  Reply error;
};

std::string encode(const Request& r);
std::string encode(const Reply& r);

/// Total over arbitrary bytes: never throws.
Decoded decode_request(std::string_view datagram);
std::optional<Reply> decode_reply(std::string_view datagram);

}  // namespace mpstat
