#include "ibh/wire.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ibh::wire
{
    Network::Network(sim::Simulator& simulator, WireConfig config) : sim_(simulator), config_(config)
    {
        if (config_.max_retries < 0 || config_.rto <= 0)
        {
            throw std::invalid_argument("wire: rto must be positive and max_retries non-negative");
        }
    }

    void Network::add_link(sim::LinkModel link, bool crosses_tap)
    {
        if (link.base_latency <= 0)
        {
            throw std::invalid_argument("wire: link latency must be positive");
        }
        const auto k = key(link.src, link.dst);
        auto& f = flows_[k];
        f.link = std::move(link);
        f.tapped = crosses_tap;
    }

    bool Network::has_link(Ipv4 src, Ipv4 dst) const { return flows_.count(key(src, dst)) != 0; }

    Network::Flow& Network::flow(Ipv4 src, Ipv4 dst)
    {
        auto it = flows_.find(key(src, dst));
        if (it == flows_.end())
        {
            throw sim::KernelError("no link " + src.str() + "->" + dst.str());
        }
        return it->second;
    }

    sim::LinkModel& Network::link(Ipv4 src, Ipv4 dst) { return flow(src, dst).link; }

    void Network::set_fluctuations(const std::vector<sim::FluctuationWindow>& windows)
    {
        for (auto& [k, f] : flows_)
        {
            f.link.fluctuation_windows = windows;
        }
    }

    void Network::set_adversary_rule(std::shared_ptr<const sim::PacketFilter> rule)
    {
        for (auto& [k, f] : flows_)
        {
            if (f.tapped)
            {
                f.link.adversary_rule = rule;
            }
        }
    }

    void Network::transmit(const AppMessage& msg, DeliveryHandler on_delivered, LossHandler on_lost)
    {
        if (msg.payload_length == 0)
        {
            throw std::invalid_argument("wire: empty application message");
        }
        auto& f = flow(msg.src, msg.dst);
        PacketMeta pkt;
        pkt.src = msg.src;
        pkt.dst = msg.dst;
        pkt.wire_length = ciphertext_length(msg.payload_length, config_.overhead);
        pkt.seq = f.next_seq++;
        pkt.truth.critical = msg.critical;
        pkt.truth.plc_state = msg.plc_state;
        pkt.truth.repetition = msg.repetition;
        pkt.truth.slot = msg.slot;
        attempt(std::make_shared<const AppMessage>(msg), pkt, 0,
                std::make_shared<DeliveryHandler>(std::move(on_delivered)),
                std::make_shared<LossHandler>(std::move(on_lost)));
    }

    void Network::attempt(std::shared_ptr<const AppMessage> msg, PacketMeta pkt, int attempt_no,
                          std::shared_ptr<DeliveryHandler> on_delivered, std::shared_ptr<LossHandler> on_lost)
    {
        const SimTime now = sim_.now();
        auto& f = flow(pkt.src, pkt.dst);
        pkt.capture_time = now;
        pkt.retransmission = attempt_no > 0;
        const auto outcome = sim::link_deliver(pkt, f.link, now);
        pkt.truth.dropped_by_adversary = outcome.kind == sim::DeliveryKind::dropped_adversary;
        ++attempts_;

        if (f.tapped)
        {
            if (recording_)
            {
                trace_.packets.push_back(pkt);
            }
            // The observer may install a rule; it only affects later attempts.
            if (tap_observer_)
            {
                tap_observer_(pkt);
            }
        }

        if (outcome.delivered())
        {
            sim_.schedule(outcome.at, [msg, on_delivered, at = outcome.at] {
                if (*on_delivered)
                {
                    (*on_delivered)(*msg, at);
                }
            });
            return;
        }
        if (attempt_no < config_.max_retries)
        {
            sim_.schedule(now + config_.rto, [this, msg, pkt, attempt_no, on_delivered, on_lost] {
                attempt(msg, pkt, attempt_no + 1, on_delivered, on_lost);
            });
            return;
        }
        ++final_losses_;
        if (*on_lost)
        {
            (*on_lost)(*msg);
        }
    }

    void write_trace_csv(std::ostream& out, const CaptureTrace& trace, bool ground_truth)
    {
        out << "time_us,src,dst,length_bytes,seq,retx,critical,dropped_by_adversary\n";
        for (const auto& p : trace.packets)
        {
            out << p.capture_time << ',' << p.src.str() << ',' << p.dst.str() << ',' << p.wire_length << ','
                << p.seq << ',' << (p.retransmission ? 1 : 0) << ',';
            if (ground_truth)
            {
                out << (p.truth.critical ? 1 : 0) << ',' << (p.truth.dropped_by_adversary ? 1 : 0);
            }
            else
            {
                out << ',';
            }
            out << '\n';
        }
    }

    namespace
    {
        std::vector<std::string> split_csv_line(const std::string& line)
        {
            std::vector<std::string> cells;
            std::string cell;
            std::istringstream is(line);
            while (std::getline(is, cell, ','))
            {
                cells.push_back(cell);
            }
            if (!line.empty() && line.back() == ',')
            {
                cells.emplace_back();
            }
            return cells;
        }
    }

    CaptureTrace read_trace_csv(std::istream& in, std::optional<SimTime> capture_start,
                                std::optional<SimTime> capture_end)
    {
        CaptureTrace trace;
        std::string line;
        if (!std::getline(in, line) || line.rfind("time_us,src,dst,length_bytes,seq,retx", 0) != 0)
        {
            throw std::runtime_error("trace csv: missing or unexpected header");
        }
        std::size_t lineno = 1;
        while (std::getline(in, line))
        {
            ++lineno;
            if (line.empty())
            {
                continue;
            }
            const auto c = split_csv_line(line);
            if (c.size() != 8)
            {
                throw std::runtime_error("trace csv: line " + std::to_string(lineno) + " has " +
                                         std::to_string(c.size()) + " fields");
            }
            PacketMeta p;
            p.capture_time = std::stoll(c[0]);
            p.src = Ipv4::parse(c[1]);
            p.dst = Ipv4::parse(c[2]);
            p.wire_length = static_cast<std::uint32_t>(std::stoul(c[3]));
            p.seq = std::stoull(c[4]);
            p.retransmission = c[5] == "1";
            p.truth.critical = c[6] == "1";
            p.truth.dropped_by_adversary = c[7] == "1";
            if (!trace.packets.empty() && p.capture_time < trace.packets.back().capture_time)
            {
                throw std::runtime_error("trace csv: capture times decrease at line " + std::to_string(lineno));
            }
            trace.packets.push_back(p);
        }
        const SimTime first = trace.packets.empty() ? 0 : trace.packets.front().capture_time;
        const SimTime last = trace.packets.empty() ? 0 : trace.packets.back().capture_time;
        trace.capture_start = capture_start.value_or(first);
        trace.capture_end = capture_end.value_or(last);
        return trace;
    }
}
