#pragma once

#include <cmath>
#include <cstdint>

namespace ptlab {

// Counter-based stream of pseudorandom draws. Every output is a pure function
// of (master_seed, stream_id, counter), so draws can be replayed, split across
// trials, or indexed out of order without touching shared state. Distinct
// stream_ids give statistically independent sequences.
struct RngStream {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_id = 0;
    std::uint64_t counter = 0;

    RngStream() = default;
    RngStream(std::uint64_t master, std::uint64_t stream)
        : master_seed(master), stream_id(stream) {}

    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

    static std::uint64_t mix64(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key() const {
        return mix64(master_seed + kGolden) ^ mix64(stream_id * 0xD1342543DE82EF95ull + 0x632BE59BD9B4E019ull);
    }

    // Raw word at an absolute counter position; does not advance the stream.
    std::uint64_t raw_at(std::uint64_t index) const {
        return mix64(key() + (index + 1) * kGolden);
    }

    std::uint64_t next_raw() { return raw_at(counter++); }

    // Uniform on [0,1) with 53 random bits.
    double uniform_at(std::uint64_t index) const {
        return static_cast<double>(raw_at(index) >> 11) * 0x1.0p-53;
    }
    double uniform() { return static_cast<double>(next_raw() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; consumes exactly two counter slots, so
    // normal_at(i) is randomly accessible with stride 2.
    double normal_at(std::uint64_t pair_index) const {
        const double u1 = 1.0 - uniform_at(2 * pair_index);      // (0,1]
        const double u2 = uniform_at(2 * pair_index + 1);        // [0,1)
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }
    double normal() {
        if (counter & 1) ++counter;  // re-align after an odd number of uniforms
        const double z = normal_at(counter / 2);
        counter += 2;
        return z;
    }

    // Independent child stream identified by an application tag.
    RngStream substream(std::uint64_t tag) const {
        RngStream s;
        s.master_seed = master_seed;
        s.stream_id = mix64(stream_id * 0xFF51AFD7ED558CCDull + tag + 1);
        s.counter = 0;
        return s;
    }
};

}  // namespace ptlab
