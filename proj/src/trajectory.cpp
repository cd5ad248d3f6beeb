#include "sfc/trajectory.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sfc {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_trajectories(const std::filesystem::path& path,
                        const std::vector<Trajectory>& trajs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << kTrajectoryHeader << "\n";
    for (const Trajectory& tr : trajs) {
        for (std::size_t i = 0; i < tr.size(); ++i) {
            out << format_double(tr.t[i]);
            for (double v : tr.u[i]) out << ',' << format_double(v);
            for (double v : tr.y[i]) out << ',' << format_double(v);
            out << '\n';
        }
    }
}

std::vector<Trajectory> read_trajectories(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trajectory file: " + path.string());

    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("empty trajectory file: " + path.string());
    }
    if (line != kTrajectoryHeader) {
        throw std::runtime_error("unexpected trajectory header in " + path.string());
    }

    std::vector<Trajectory> trajs;
    Trajectory cur;
    double prev_t = -1.0;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::array<double, 11> vals{};
        std::string tok;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (!std::getline(ss, tok, ',')) {
                throw std::runtime_error("short row in trajectory file: " + line);
            }
            vals[i] = std::stod(tok);
        }
        if (!first && vals[0] <= prev_t) {
            trajs.push_back(std::move(cur));
            cur = Trajectory{};
        }
        cur.push(vals[0], {vals[1], vals[2], vals[3], vals[4]},
                 {vals[5], vals[6], vals[7], vals[8], vals[9], vals[10]});
        prev_t = vals[0];
        first = false;
    }
    if (cur.size() > 0) trajs.push_back(std::move(cur));
    return trajs;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file: " + path.string());
    std::uint64_t h = 14695981039346656037ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    return h;
}

}  // namespace sfc
