#include "nelsonmc/archive.hpp"

#include <cstring>
#include <fstream>

namespace nelsonmc {

namespace {

constexpr std::uint64_t kMagic = 0x314843524143'4d4eULL; // "NMCARCH1" LE
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("read_archive: truncated file");
    return v;
}

} // namespace

void write_archive(const SampleSet& samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_archive: cannot open " + path);
    put(out, kMagic);
    put(out, kVersion);
    const std::uint32_t flen = static_cast<std::uint32_t>(samples.config_fingerprint.size());
    put(out, flen);
    out.write(samples.config_fingerprint.data(), flen);
    put(out, samples.half_width);
    put(out, samples.dt);
    put(out, samples.t_margin);
    put(out, static_cast<std::int32_t>(samples.dim));
    put(out, static_cast<std::uint8_t>(samples.pinned ? 1 : 0));
    put(out, static_cast<std::int32_t>(samples.chains.size()));
    put(out, static_cast<std::int32_t>(samples.paths.size()));
    for (const auto& c : samples.chains) {
        put(out, static_cast<std::int32_t>(c.n_kept));
        put(out, c.accept_bead);
        put(out, c.accept_block);
        put(out, c.accept_shift);
        put(out, c.tau_int_q0sq);
        put(out, c.ess);
    }
    for (std::size_t c = 0; c + 1 < samples.chain_offsets.size(); ++c) {
        for (std::size_t i = samples.chain_offsets[c]; i < samples.chain_offsets[c + 1]; ++i) {
            put(out, static_cast<std::int32_t>(c));
            const ParticlePath& p = samples.paths[i];
            out.write(reinterpret_cast<const char*>(p.pos.data()),
                      static_cast<std::streamsize>(p.pos.size() * sizeof(double)));
        }
    }
    if (!out) throw std::runtime_error("write_archive: write failed for " + path);
}

SampleSet read_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_archive: cannot open " + path);
    if (get<std::uint64_t>(in) != kMagic)
        throw std::runtime_error("read_archive: not a nelsonmc path archive");
    if (get<std::uint32_t>(in) != kVersion)
        throw std::runtime_error("read_archive: unsupported archive version");
    SampleSet s;
    const std::uint32_t flen = get<std::uint32_t>(in);
    s.config_fingerprint.resize(flen);
    in.read(s.config_fingerprint.data(), flen);
    s.half_width = get<double>(in);
    s.dt = get<double>(in);
    s.t_margin = get<double>(in);
    s.dim = get<std::int32_t>(in);
    s.pinned = get<std::uint8_t>(in) != 0;
    const std::int32_t n_chains = get<std::int32_t>(in);
    const std::int32_t n_paths = get<std::int32_t>(in);
    s.chains.resize(n_chains);
    for (auto& c : s.chains) {
        c.n_kept = get<std::int32_t>(in);
        c.accept_bead = get<double>(in);
        c.accept_block = get<double>(in);
        c.accept_shift = get<double>(in);
        c.tau_int_q0sq = get<double>(in);
        c.ess = get<double>(in);
    }
    const int n_beads = static_cast<int>(std::lround(2.0 * s.half_width / s.dt)) + 1;
    s.paths.reserve(n_paths);
    std::vector<std::int32_t> chain_of(n_paths);
    for (std::int32_t i = 0; i < n_paths; ++i) {
        chain_of[i] = get<std::int32_t>(in);
        ParticlePath p = make_path(s.half_width, s.dt, s.dim);
        in.read(reinterpret_cast<char*>(p.pos.data()),
                static_cast<std::streamsize>(p.pos.size() * sizeof(double)));
        if (!in) throw std::runtime_error("read_archive: truncated path data");
        (void)n_beads;
        s.paths.push_back(std::move(p));
    }
    s.chain_offsets.assign(1, 0);
    std::size_t idx = 0;
    for (std::int32_t c = 0; c < n_chains; ++c) {
        while (idx < s.paths.size() && chain_of[idx] == c) ++idx;
        s.chain_offsets.push_back(idx);
    }
    return s;
}

} // namespace nelsonmc
