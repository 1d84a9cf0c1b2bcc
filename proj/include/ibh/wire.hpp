#pragma once

#include "ibh/packet.hpp"
#include "ibh/simkernel.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace ibh::wire
{
    struct WireConfig
    {
        std::uint32_t overhead = 29; // record header + AEAD tag, bytes
        SimTime rto = 200 * kMillisecond;
        int max_retries = 5;
    };

    /// Affine ciphertext length model: every payload byte survives encryption 1:1.
    constexpr std::uint32_t ciphertext_length(std::uint32_t payload_length, std::uint32_t overhead = 29)
    {
        return payload_length + overhead;
    }

    struct AppMessage
    {
        Ipv4 src;
        Ipv4 dst;
        std::uint32_t payload_length = 0;
        int kind = 0;
        bool critical = false;
        SimTime emit_time = 0;
        // Application content. Opaque on the wire; only endpoints read it.
        std::int64_t value = 0;
        int plc_state = -1;
        std::int64_t repetition = -1;
        int slot = -1;
    };

    /// Point-to-point transport with per-flow sequence numbers and fixed-RTO
    /// retransmission. Every attempt on a tapped link is recorded at the X1 tap
    /// before the forwarding decision takes effect.
    class Network
    {
    public:
        using DeliveryHandler = std::function<void(const AppMessage&, SimTime)>;
        using LossHandler = std::function<void(const AppMessage&)>;
        using TapObserver = std::function<void(const PacketMeta&)>;

        Network(sim::Simulator& simulator, WireConfig config);

        const WireConfig& config() const noexcept { return config_; }

        void add_link(sim::LinkModel link, bool crosses_tap = true);
        bool has_link(Ipv4 src, Ipv4 dst) const;
        sim::LinkModel& link(Ipv4 src, Ipv4 dst);

        /// Replaces the benign windows on every link.
        void set_fluctuations(const std::vector<sim::FluctuationWindow>& windows);
        /// Installs (or clears, with nullptr) the adversary filter on every tapped link.
        void set_adversary_rule(std::shared_ptr<const sim::PacketFilter> rule);

        void set_tap_observer(TapObserver observer) { tap_observer_ = std::move(observer); }
        void set_recording(bool on) { recording_ = on; }

        void transmit(const AppMessage& msg, DeliveryHandler on_delivered, LossHandler on_lost = {});

        CaptureTrace& trace() noexcept { return trace_; }
        const CaptureTrace& trace() const noexcept { return trace_; }

        std::uint64_t attempts() const noexcept { return attempts_; }
        std::uint64_t final_losses() const noexcept { return final_losses_; }

    private:
        struct Flow
        {
            sim::LinkModel link;
            bool tapped = true;
            std::uint64_t next_seq = 1;
        };

        static std::uint64_t key(Ipv4 src, Ipv4 dst) { return (std::uint64_t{src.value} << 32) | dst.value; }
        Flow& flow(Ipv4 src, Ipv4 dst);
        void attempt(std::shared_ptr<const AppMessage> msg, PacketMeta pkt, int attempt_no,
                     std::shared_ptr<DeliveryHandler> on_delivered, std::shared_ptr<LossHandler> on_lost);

        sim::Simulator& sim_;
        WireConfig config_;
        std::map<std::uint64_t, Flow> flows_;
        CaptureTrace trace_;
        TapObserver tap_observer_;
        bool recording_ = true;
        std::uint64_t attempts_ = 0;
        std::uint64_t final_losses_ = 0;
    };

    /// `time_us,src,dst,length_bytes,seq,retx,critical,dropped_by_adversary`
    void write_trace_csv(std::ostream& out, const CaptureTrace& trace, bool ground_truth);

    /// Inverse of write_trace_csv. Capture start/end default to the first/last packet time.
    CaptureTrace read_trace_csv(std::istream& in, std::optional<SimTime> capture_start = std::nullopt,
                                std::optional<SimTime> capture_end = std::nullopt);
}
