#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace sfc {

// One logged run sampled at a fixed period: inputs applied over [t_k, t_k+1)
// and the measurement taken at t_k.
struct Trajectory {
    std::vector<double> t;
    std::vector<std::array<double, 4>> u;  // Q_PM, Q_air, Q_TM, w_cryst
    std::vector<std::array<double, 6>> y;  // T_PM, T_TM, c_PM, d10, d50, d90

    std::size_t size() const { return t.size(); }
    void push(double time, const std::array<double, 4>& inputs,
              const std::array<double, 6>& meas) {
        t.push_back(time);
        u.push_back(inputs);
        y.push_back(meas);
    }
};

inline constexpr const char* kTrajectoryHeader =
    "t,Q_PM,Q_air,Q_TM,w_cryst,T_PM,T_TM,c_PM,d10,d50,d90";

// Serializes trajectories back to back; a time reset marks a new trajectory.
void write_trajectories(const std::filesystem::path& path,
                        const std::vector<Trajectory>& trajs);

// Splits on non-increasing time stamps.
std::vector<Trajectory> read_trajectories(const std::filesystem::path& path);

std::string format_double(double v);

// FNV-1a over the raw file bytes; stored in model artifacts.
std::uint64_t file_hash(const std::filesystem::path& path);

}  // namespace sfc
