#ifndef KTNET_COMMON_HPP
#define KTNET_COMMON_HPP

#include <charconv>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ktnet {

// Streams all args into the message. Used for every precondition check so
// error text carries the offending values.
template <typename... Args>
std::string msg_cat(const Args&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

// Invalid caller input (shapes, flags, config values).
template <typename... Args>
void require(bool cond, const Args&... args) {
    if (!cond) throw std::invalid_argument(msg_cat(args...));
}

// Broken runtime state (I/O failures, parse errors, divergence).
template <typename... Args>
void ensure(bool cond, const Args&... args) {
    if (!cond) throw std::runtime_error(msg_cat(args...));
}

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Shortest round-trip decimal. All text output of reals goes through here so
// logs and cloud files are bit-exact on reload and across reruns.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    ensure(res.ec == std::errc() && res.ptr == s.data() + s.size(),
           "cannot parse real number from '", std::string(s), "'");
    return v;
}

// xoshiro256** seeded via splitmix64. The standard <random> distributions are
// implementation-defined, so every random draw in the project goes through
// this to keep runs byte-identical across platforms and resumes.
class Rng {
public:
    explicit Rng(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s_) {
            x += 0x9e3779b97f4a7c15ULL;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            w = z ^ (z >> 31);
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0,n) via 128-bit multiply.
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<uint64_t> state() const { return {s_[0], s_[1], s_[2], s_[3]}; }

    void set_state(const std::vector<uint64_t>& st) {
        require(st.size() == 4, "rng state must have 4 words, got ", st.size());
        for (int i = 0; i < 4; ++i) s_[i] = st[i];
    }

    // Derives an independent stream, e.g. one per dataset instance.
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

}  // namespace ktnet

#endif
