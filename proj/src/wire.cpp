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


#include "mpstat/wire.hpp"

#include <array>
#include <charconv>
#include <vector>

namespace mpstat {
namespace {

struct VerbSpec {
  Verb verb;
  std::string_view word;
  int arity;
};

constexpr std::array<VerbSpec, 9> kVerbs{{
    {Verb::Ping, "PING", 0},
    {Verb::Info, "INFO", 0},
    {Verb::Set, "SET", 2},
    {Verb::Sw, "SW", 2},
    {Verb::GetI, "GETI", 1},
    {Verb::GetV, "GETV", 1},
    {Verb::Cal, "CAL", 0},
    {Verb::Run, "RUN", 1},
    {Verb::Stop, "STOP", 0},
}};

bool printable(char c) { return c >= 0x20 && c <= 0x7e; }

Decoded fail(ErrorCode code, std::string text) { return {std::nullopt, Reply::error(code, std::move(text))}; }

std::optional<int> parse_int(std::string_view s) {
  if (s.empty() || s.size() > 11) return std::nullopt;
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

bool valid_name(std::string_view s) {
  if (s.empty() || s.size() > kMaxNameLength) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    if (!ok) return false;
  }
  return s != "." && s != "..";
}

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(' ', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Shared framing checks; returns the line without its LF.
std::optional<std::string_view> frame(std::string_view d, Reply* err) {
  if (d.size() > kMaxDatagram) {
    if (err) *err = Reply::error(ErrorCode::Parse, "too-long");
    return std::nullopt;
  }
  if (d.empty() || d.back() != '\n') {
    if (err) *err = Reply::error(ErrorCode::Parse, "no-lf");
    return std::nullopt;
  }
  d.remove_suffix(1);
  for (char c : d) {
    if (c == '\n') {
      if (err) *err = Reply::error(ErrorCode::Parse, "multiple-commands");
      return std::nullopt;
    }
    if (!printable(c)) {
      if (err) *err = Reply::error(ErrorCode::Parse, "not-ascii");
      return std::nullopt;
    }
  }
  return d;
}

}  // namespace

const char* to_string(Verb v) {
  for (const auto& s : kVerbs)
    if (s.verb == v) return s.word.data();
  return "?";
}

std::string encode(const Request& r) {
  std::string out = to_string(r.verb);
  switch (r.verb) {
    case Verb::Set:
    case Verb::Sw:
      out += ' ' + std::to_string(r.channel) + ' ' + std::to_string(r.value);
      break;
    case Verb::GetI:
    case Verb::GetV:
      out += ' ' + std::to_string(r.channel);
      break;
    case Verb::Run:
      out += ' ' + r.name;
      break;
    default:
      break;
  }
  out += '\n';
  return out;
}

std::string encode(const Reply& r) {
  std::string out;
  if (r.ok) {
    out = "OK";
    if (!r.payload.empty()) out += ' ' + r.payload;
  } else {
    out = "ERR " + std::to_string(static_cast<int>(r.code)) + ' ' + r.text;
  }
  out += '\n';
  return out;
}

Decoded decode_request(std::string_view datagram) {
  Reply err;
  const auto line = frame(datagram, &err);
  if (!line) return {std::nullopt, err};
  if (line->empty()) return fail(ErrorCode::Parse, "empty");

  const auto tok = tokens(*line);
  for (const auto& t : tok)
    if (t.empty()) return fail(ErrorCode::Parse, "bad-space");

  const VerbSpec* spec = nullptr;
  for (const auto& s : kVerbs)
    if (s.word == tok[0]) spec = &s;
  if (!spec) return fail(ErrorCode::Unsupported, "unknown-command");
  if (static_cast<int>(tok.size()) - 1 != spec->arity) return fail(ErrorCode::Parse, "arity");

  Request req;
  req.verb = spec->verb;
  switch (spec->verb) {
    case Verb::Set:
    case Verb::Sw: {
      const auto ch = parse_int(tok[1]);
      const auto v = parse_int(tok[2]);
      if (!ch || !v) return fail(ErrorCode::Parse, "bad-int");
      if (spec->verb == Verb::Sw && *v != 0 && *v != 1) return fail(ErrorCode::Range, "switch");
      req.channel = *ch;
      req.value = *v;
      break;
    }
    case Verb::GetI:
    case Verb::GetV: {
      const auto ch = parse_int(tok[1]);
      if (!ch) return fail(ErrorCode::Parse, "bad-int");
      req.channel = *ch;
      break;
    }
    case Verb::Run:
      if (!valid_name(tok[1])) return fail(ErrorCode::Parse, "bad-name");
      req.name = std::string(tok[1]);
      break;
    default:
      break;
  }
  return {req, {}};
}

std::optional<Reply> decode_reply(std::string_view datagram) {
  const auto line = frame(datagram, nullptr);
  if (!line) return std::nullopt;
  if (*line == "OK") return Reply::success();
  if (line->starts_with("OK ")) {
    auto payload = line->substr(3);
    if (payload.empty()) return std::nullopt;
    return Reply::success(std::string(payload));
  }
  if (line->starts_with("ERR ")) {
    const auto rest = line->substr(4);
    const auto sp = rest.find(' ');
    if (sp == std::string_view::npos || sp + 1 >= rest.size()) return std::nullopt;
    const auto code = parse_int(rest.substr(0, sp));
    if (!code || *code < 1 || *code > 4) return std::nullopt;
    return Reply::error(static_cast<ErrorCode>(*code), std::string(rest.substr(sp + 1)));
  }
  return std::nullopt;
}

}  // namespace mpstat
