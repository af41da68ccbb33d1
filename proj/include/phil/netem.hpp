#pragma once

// Message transport with fixed base latency, bounded uniform jitter, and
// i.i.d. loss. Packaged as a co-simulation unit (message ports only) plus
// a bare generator for testing the stochastic stream in isolation.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "phil/cosim.hpp"
#include "phil/errors.hpp"
#include "phil/format.hpp"
#include "phil/rng.hpp"

namespace phil {

/// Transport description. base_latency_s - jitter_s bounds the earliest
/// possible delivery relative to the send time; the unit declares exactly
/// that bound as its lookahead, so conservative runs need it positive.
struct NetworkSpec {
    double base_latency_s = 0.0;
    double jitter_s = 0.0;
    double loss_probability = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(base_latency_s >= 0.0) || !std::isfinite(base_latency_s)) {
            throw ConfigError("network: base latency must be nonnegative and finite");
        }
        if (!(jitter_s >= 0.0) || !std::isfinite(jitter_s)) {
            throw ConfigError("network: jitter must be nonnegative and finite");
        }
        if (!(loss_probability >= 0.0) || !(loss_probability <= 1.0) || !std::isfinite(loss_probability)) {
            throw ConfigError("network: loss probability must lie in [0, 1]");
        }
    }

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct DeliverySample {
    bool delivered = false;
    double delay_s = 0.0;  // meaningful whether or not the message survives
};

/// One message's fate. Two draws per message in fixed order - loss uniform
/// first, then jitter uniform over [-jitter, +jitter] - and both are always
/// consumed, so the stream stays aligned regardless of outcomes.
inline DeliverySample next_delivery(SplitMix64& rng, const NetworkSpec& spec) {
    const bool lost = rng.next_unit() < spec.loss_probability;
    const double jitter = rng.next_in(-spec.jitter_s, spec.jitter_s);
    return {!lost, spec.base_latency_s + jitter};
}

/// The full draw sequence for n messages, for testing the generator
/// without a master in the way.
inline std::vector<DeliverySample> sample_stream(const NetworkSpec& spec, std::size_t n) {
    spec.validate();
    SplitMix64 rng(spec.seed);
    std::vector<DeliverySample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(next_delivery(rng, spec));
    return out;
}

/// Network emulation unit: message input "in", message output "out".
/// Surviving messages leave at send time + base latency + jitter draw,
/// which is never earlier than send time + lookahead. Message-only: the
/// continuous port interface stays unsupported.
class NetemUnit : public SimUnit {
public:
    NetemUnit(std::string identity, const NetworkSpec& spec)
        : SimUnit(std::move(identity)), spec_(spec), rng_(spec.seed) {
        spec_.validate();
        lookahead_ = spec_.base_latency_s - spec_.jitter_s;
        if (!(lookahead_ > 0.0)) {
            throw ConfigError("network: base latency " + format_g17(spec_.base_latency_s) + " s minus jitter " +
                              format_g17(spec_.jitter_s) +
                              " s must be positive; it is the transport's lookahead promise");
        }
    }

    double lookahead_s() const override { return lookahead_; }
    std::vector<std::string> input_ports() const override { return {"in"}; }
    std::vector<std::string> output_ports() const override { return {"out"}; }

    void deliver(double time_s, const std::string& port, double payload) override {
        if (port != "in") SimUnit::deliver(time_s, port, payload);
        accepted_ += 1;
        const DeliverySample fate = next_delivery(rng_, spec_);
        if (fate.delivered) {
            in_flight_.insert(Scheduled{time_s + fate.delay_s, flight_seq_++, payload});
        } else {
            dropped_ += 1;
        }
    }

    /// No internal dynamics: just release every in-flight message whose
    /// delivery time has come inside the new emission floor. Anything at or
    /// above committed + lookahead stays queued, because a future arrival
    /// could still schedule a delivery there.
    std::vector<OutMessage> advance_to(double t_s) override {
        commit(t_s);
        std::vector<OutMessage> out;
        const double floor = t_s + lookahead_;
        for (auto it = in_flight_.begin(); it != in_flight_.end() && it->time_s < floor;) {
            out.push_back({"out", it->time_s, it->payload});
            it = in_flight_.erase(it);
        }
        return out;
    }

    std::size_t accepted() const { return accepted_; }
    std::size_t dropped() const { return dropped_; }

private:
    struct Scheduled {
        double time_s;
        std::uint64_t seq;
        double payload;
        bool operator<(const Scheduled& other) const {
            if (time_s != other.time_s) return time_s < other.time_s;
            return seq < other.seq;
        }
    };

    NetworkSpec spec_;
    SplitMix64 rng_;
    double lookahead_ = 0.0;
    std::multiset<Scheduled> in_flight_;
    std::uint64_t flight_seq_ = 0;
    std::size_t accepted_ = 0;
    std::size_t dropped_ = 0;
};

}  // namespace phil
