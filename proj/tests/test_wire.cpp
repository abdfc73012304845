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


#include <random>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "mpstat/server.hpp"
#include "mpstat/wire.hpp"

namespace mpstat {
namespace {

std::string reply_to(std::string_view datagram) {
  const auto d = decode_request(datagram);
  return d.request ? std::string("decoded") : encode(d.error);
}

TEST(WireCodecTest, RequestExamples) {
  const auto set = decode_request("SET 3 1400\n");
  ASSERT_TRUE(set.request);
  EXPECT_EQ(*set.request, Request::set(3, 1400));
  EXPECT_EQ(encode(Request::set(3, 1400)), "SET 3 1400\n");
  EXPECT_EQ(*decode_request("RUN cv_100\n").request, Request::run("cv_100"));
  EXPECT_EQ(*decode_request("SW 0 1\n").request, Request::sw(0, true));
  EXPECT_EQ(*decode_request("GETV -1\n").request, Request::get_voltage(-1));
}

TEST(WireCodecTest, ReplyEncoding) {
  EXPECT_EQ(encode(Reply::success()), "OK\n");
  EXPECT_EQ(encode(Reply::success("1650000")), "OK 1650000\n");
  EXPECT_EQ(encode(Reply::error(ErrorCode::Range, "channel")), "ERR 2 channel\n");
  EXPECT_EQ(decode_reply("ERR 3 busy\n")->code, ErrorCode::State);
  EXPECT_EQ(decode_reply("OK PONG\n")->payload, "PONG");
  EXPECT_FALSE(decode_reply("ERR 9 nope\n"));
  EXPECT_FALSE(decode_reply("OK \n"));
  EXPECT_FALSE(decode_reply("HELLO\n"));
}

TEST(WireCodecTest, MalformedRequests) {
  EXPECT_EQ(reply_to("SET x y\n"), "ERR 1 bad-int\n");
  EXPECT_EQ(reply_to("SET 1 99999999999\n"), "ERR 1 bad-int\n");
  EXPECT_EQ(reply_to("PING"), "ERR 1 no-lf\n");
  EXPECT_EQ(reply_to("PING\nPING\n"), "ERR 1 multiple-commands\n");
  EXPECT_EQ(reply_to("\n"), "ERR 1 empty\n");
  EXPECT_EQ(reply_to("SET  1 2\n"), "ERR 1 bad-space\n");
  EXPECT_EQ(reply_to("PING \n"), "ERR 1 bad-space\n");
  EXPECT_EQ(reply_to("PING\r\n"), "ERR 1 not-ascii\n");
  EXPECT_EQ(reply_to("SET 1\n"), "ERR 1 arity\n");
  EXPECT_EQ(reply_to("SW 0 2\n"), "ERR 2 switch\n");
  EXPECT_EQ(reply_to("RUN ../etc\n"), "ERR 1 bad-name\n");
  EXPECT_EQ(reply_to("RUN ..\n"), "ERR 1 bad-name\n");
  EXPECT_EQ(reply_to("ping\n"), "ERR 4 unknown-command\n");
  EXPECT_EQ(reply_to(std::string(513, 'A')), "ERR 1 too-long\n");
}

TEST(WireCodecTest, DecodeIsTotalOnArbitraryBytes) {
  const std::set<std::string> documented = {
      "ERR 1 too-long\n", "ERR 1 no-lf\n",     "ERR 1 multiple-commands\n", "ERR 1 not-ascii\n",
      "ERR 1 empty\n",    "ERR 1 bad-space\n", "ERR 1 arity\n",             "ERR 1 bad-int\n",
      "ERR 1 bad-name\n", "ERR 2 switch\n",    "ERR 4 unknown-command\n"};
  std::mt19937_64 rng(101);
  const std::string alphabet = "SETWGIVPNCALRUOF0123456789- \n\r\t.x";
  for (int k = 0; k < 20000; ++k) {
    const auto len = rng() % 24;
    std::string d;
    for (std::size_t i = 0; i < len; ++i)
      d += k % 2 ? static_cast<char>(rng() & 0xff) : alphabet[rng() % alphabet.size()];
    const auto r = decode_request(d);
    if (!r.request) EXPECT_TRUE(documented.count(encode(r.error))) << encode(r.error);
  }
}

TEST(InstrumentTest, CommandExamples) {
  DeviceConfig c;
  Instrument ins{Device(c)};
  Server s(ins, {"127.0.0.1", 0, true});
  EXPECT_EQ(s.handle("PING\n"), "OK PONG\n");
  EXPECT_EQ(s.handle("SET 3 1400\n"), "OK\n");
  EXPECT_EQ(s.handle("SET 99 0\n"), "ERR 2 channel\n");
  EXPECT_EQ(s.handle("SET 0 5000\n"), "ERR 2 mv\n");
  EXPECT_EQ(s.handle("GETV 0\n"), "OK 1\n");
  EXPECT_EQ(s.handle("STOP\n"), "ERR 3 idle\n");
  EXPECT_EQ(s.handle("RUN cv_100\n"), "ERR 4 no-protocols\n");
  ins.device().inject_offset(0, 1650e-9);
  s.advance_to(1.0);
  EXPECT_EQ(s.handle("GETI 0\n"), "OK 1650000\n");
  const auto info = s.handle("INFO\n");
  EXPECT_NE(info.find("channels=8"), std::string::npos);
  EXPECT_NE(info.find("range_pA=1650000"), std::string::npos);
  EXPECT_NE(info.find("rated_pA=1500000"), std::string::npos);
  EXPECT_NE(info.find("drive_mV=-4000..3984"), std::string::npos);
}

TEST(InstrumentTest, SetIsIdempotent) {
  Instrument a{Device(DeviceConfig{})}, b{Device(DeviceConfig{})};
  a.execute(Request::set(2, 733));
  b.execute(Request::set(2, 733));
  b.execute(Request::set(2, 733));
  EXPECT_EQ(a.device().channel(2).dac_code, b.device().channel(2).dac_code);
  EXPECT_EQ(a.device().channel(2).set_mV, b.device().channel(2).set_mV);
}

TEST(InstrumentTest, RunStopAndBusyRefusals) {
  Instrument ins{Device(DeviceConfig{}), std::filesystem::path(MPSTAT_SOURCE_DIR) / "protocols"};
  EXPECT_EQ(encode(ins.execute(Request::run("missing"))), "ERR 2 protocol\n");
  EXPECT_EQ(encode(ins.execute(Request::run("cv_100"))), "OK\n");
  EXPECT_TRUE(ins.running());
  EXPECT_EQ(encode(ins.execute(Request::set(0, 0))), "ERR 3 busy\n");
  EXPECT_EQ(encode(ins.execute(Request::sw(0, true))), "ERR 3 busy\n");
  EXPECT_EQ(encode(ins.execute(Request::calibrate())), "ERR 3 busy\n");
  EXPECT_EQ(encode(ins.execute(Request::run("cv_100"))), "ERR 3 busy\n");
  ins.advance_to(1.0);
  EXPECT_TRUE(ins.device().channel(0).switch_closed);
  EXPECT_EQ(encode(ins.execute(Request::stop())), "OK\n");
  EXPECT_FALSE(ins.running());
  EXPECT_EQ(encode(ins.execute(Request::calibrate())), "OK\n");
}

TEST(InstrumentTest, RunCompletesOnItsOwn) {
  Instrument ins{Device(DeviceConfig{}), std::filesystem::path(MPSTAT_SOURCE_DIR) / "protocols"};
  ins.execute(Request::run("cv_100"));
  ins.advance_to(28.0 + 1.0);
  EXPECT_FALSE(ins.running());
  EXPECT_FALSE(ins.device().busy());
}

}  // namespace
}  // namespace mpstat
