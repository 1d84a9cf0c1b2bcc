#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ibh/wire.hpp"

#include <memory>
#include <set>
#include <sstream>

using namespace ibh;
using namespace ibh::wire;

namespace
{
    const Ipv4 kA = make_ipv4(192, 168, 1, 10);
    const Ipv4 kB = make_ipv4(192, 168, 2, 20);

    struct Fixture
    {
        sim::Simulator sim;
        Network net{sim, WireConfig{}};
        int delivered = 0;
        int lost = 0;

        Fixture()
        {
            net.add_link({kA, kB, 10 * kMillisecond, {}, nullptr});
            net.add_link({kB, kA, 10 * kMillisecond, {}, nullptr});
        }

        void send(Ipv4 src, Ipv4 dst, std::uint32_t payload, SimTime at, bool critical = false)
        {
            sim.schedule(at, [=, this] {
                AppMessage m;
                m.src = src;
                m.dst = dst;
                m.payload_length = payload;
                m.critical = critical;
                m.emit_time = sim.now();
                net.transmit(
                    m, [this](const AppMessage&, SimTime) { ++delivered; }, [this](const AppMessage&) { ++lost; });
            });
        }
    };

    struct DropAll : sim::PacketFilter
    {
        bool matches(const PacketMeta&, SimTime) const override { return true; }
    };
}

TEST_CASE("ciphertext length is affine with a 29 byte default overhead")
{
    static_assert(ciphertext_length(0) == 29);
    static_assert(ciphertext_length(100) == 129);
    CHECK(ciphertext_length(40) != ciphertext_length(41));
    for (std::uint32_t p = 0; p < 1000; ++p)
    {
        REQUIRE(ciphertext_length(p + 1) > ciphertext_length(p));
    }
    CHECK(ciphertext_length(10, 0) == 10);
}

TEST_CASE("a clean transmission is one packet, no retransmission")
{
    Fixture f;
    f.send(kA, kB, 100, 0);
    f.sim.run_until(kSecond);
    REQUIRE(f.net.trace().packets.size() == 1);
    const auto& p = f.net.trace().packets[0];
    CHECK_FALSE(p.retransmission);
    CHECK(p.wire_length == 129);
    CHECK(p.seq == 1);
    CHECK(f.delivered == 1);
}

TEST_CASE("one benign drop then success: two copies sharing a seq")
{
    Fixture f;
    f.net.set_fluctuations({{0, 100 * kMillisecond, sim::FluctuationMode::drop, 0}});
    f.send(kA, kB, 60, 0);
    f.sim.run_until(kSecond);
    const auto& pk = f.net.trace().packets;
    REQUIRE(pk.size() == 2);
    CHECK_FALSE(pk[0].retransmission);
    CHECK(pk[1].retransmission);
    CHECK(pk[0].seq == pk[1].seq);
    CHECK(pk[1].capture_time - pk[0].capture_time == 200 * kMillisecond);
    CHECK(f.delivered == 1);
}

TEST_CASE("adversary dropping every copy: 1 + max_retries packets at the tap, final loss")
{
    Fixture f;
    f.net.set_adversary_rule(std::make_shared<DropAll>());
    f.send(kA, kB, 60, 0, true);
    f.sim.run_until(10 * kSecond);
    const auto& pk = f.net.trace().packets;
    CHECK(pk.size() == 6);
    for (const auto& p : pk)
    {
        CHECK(p.truth.dropped_by_adversary);
        CHECK(p.truth.critical);
    }
    CHECK(f.delivered == 0);
    CHECK(f.lost == 1);
    CHECK(f.net.final_losses() == 1);
}

TEST_CASE("request and response appear with opposite endpoints; seqs rise per flow")
{
    Fixture f;
    f.send(kA, kB, 50, 0);
    f.send(kB, kA, 70, 50 * kMillisecond);
    f.send(kA, kB, 50, 100 * kMillisecond);
    f.sim.run_until(kSecond);
    const auto& pk = f.net.trace().packets;
    REQUIRE(pk.size() == 3);
    CHECK(pk[0].src == pk[1].dst);
    CHECK(pk[0].dst == pk[1].src);
    CHECK(pk[0].seq == 1);
    CHECK(pk[2].seq == 2);
    CHECK(pk[1].seq == 1);
}

TEST_CASE("tap observer sees each attempt after the forwarding decision")
{
    Fixture f;
    f.net.set_adversary_rule(std::make_shared<DropAll>());
    int seen = 0;
    int seen_dropped = 0;
    f.net.set_tap_observer([&](const PacketMeta& p) {
        ++seen;
        seen_dropped += p.truth.dropped_by_adversary ? 1 : 0;
    });
    f.send(kA, kB, 80, 0);
    f.sim.run_until(5 * kSecond);
    CHECK(seen == 6);
    CHECK(seen_dropped == 6);
}

TEST_CASE("empty payloads are rejected")
{
    Fixture f;
    AppMessage m;
    m.src = kA;
    m.dst = kB;
    CHECK_THROWS_AS(f.net.transmit(m, [](const AppMessage&, SimTime) {}), std::invalid_argument);
}

TEST_CASE("trace csv round trip, with and without ground truth")
{
    Fixture f;
    f.net.set_fluctuations({{0, 100 * kMillisecond, sim::FluctuationMode::drop, 0}});
    f.send(kA, kB, 60, 0, true);
    f.send(kB, kA, 61, 500 * kMillisecond);
    f.sim.run_until(kSecond);
    const auto& trace = f.net.trace();

    std::stringstream plain;
    write_trace_csv(plain, trace, false);
    const std::string text = plain.str();
    CHECK(text.rfind("time_us,src,dst,length_bytes,seq,retx,critical,dropped_by_adversary\n", 0) == 0);
    CHECK(text.find("192.168.1.10,192.168.2.20,89,1,0,,\n") != std::string::npos);

    std::stringstream full;
    write_trace_csv(full, trace, true);
    const auto back = read_trace_csv(full);
    REQUIRE(back.packets.size() == trace.packets.size());
    for (std::size_t i = 0; i < back.packets.size(); ++i)
    {
        const auto& x = back.packets[i];
        const auto& y = trace.packets[i];
        CHECK(x.capture_time == y.capture_time);
        CHECK(x.src == y.src);
        CHECK(x.dst == y.dst);
        CHECK(x.wire_length == y.wire_length);
        CHECK(x.seq == y.seq);
        CHECK(x.retransmission == y.retransmission);
        CHECK(x.truth.critical == y.truth.critical);
        CHECK(x.truth.dropped_by_adversary == y.truth.dropped_by_adversary);
    }
    CHECK(back.capture_start == trace.packets.front().capture_time);

    std::stringstream again;
    write_trace_csv(again, back, true);
    std::stringstream first;
    write_trace_csv(first, trace, true);
    CHECK(again.str() == first.str());
}

TEST_CASE("ipv4 text form parses back")
{
    CHECK(Ipv4::parse("192.168.0.100") == make_ipv4(192, 168, 0, 100));
    CHECK(make_ipv4(10, 1, 2, 3).str() == "10.1.2.3");
    CHECK_THROWS(Ipv4::parse("300.1.1.1"));
    CHECK_THROWS(Ipv4::parse("1.2.3"));
}
