#include "sfc/harness/excitation.hpp"

#include <stdexcept>

namespace sfc::harness {

void ExcitationPolicy::validate() const {
    for (int c = 0; c < 4; ++c) {
        if (!(lo[static_cast<std::size_t>(c)] <= hi[static_cast<std::size_t>(c)])) {
            throw std::invalid_argument("excitation range must satisfy lo <= hi");
        }
        if (lo[static_cast<std::size_t>(c)] < 0.0) {
            throw std::invalid_argument("excitation ranges must be nonnegative");
        }
    }
    if (!(mean_hold >= 1.0)) {
        throw std::invalid_argument("excitation field 'mean_hold' must be >= 1");
    }
}

ExcitationPolicy ExcitationPolicy::from_json(const nlohmann::json& j) {
    ExcitationPolicy p;
    auto geta = [&](const char* k, std::array<double, 4>& v) {
        if (!j.contains(k)) return;
        const auto a = j.at(k).get<std::vector<double>>();
        if (a.size() != 4) {
            throw std::invalid_argument(std::string("excitation field '") + k +
                                        "' needs 4 entries (Q_pm, Q_air, Q_tm, w)");
        }
        for (int c = 0; c < 4; ++c) v[static_cast<std::size_t>(c)] = a[static_cast<std::size_t>(c)];
    };
    geta("lo", p.lo);
    geta("hi", p.hi);
    if (j.contains("mean_hold")) p.mean_hold = j.at("mean_hold").get<double>();
    if (j.contains("excite_w")) p.excite_w = j.at("excite_w").get<bool>();
    if (j.contains("w_fixed")) p.w_fixed = j.at("w_fixed").get<double>();
    p.validate();
    return p;
}

nlohmann::json ExcitationPolicy::to_json() const {
    return {{"lo", std::vector<double>(lo.begin(), lo.end())},
            {"hi", std::vector<double>(hi.begin(), hi.end())},
            {"mean_hold", mean_hold},
            {"excite_w", excite_w},
            {"w_fixed", w_fixed}};
}

ExcitationSignal::ExcitationSignal(const ExcitationPolicy& policy, std::uint64_t seed)
    : policy_(policy), rng_(seed) {
    policy_.validate();
    for (int c = 0; c < 4; ++c) {
        value_[static_cast<std::size_t>(c)] = draw(c);
        hold_left_[static_cast<std::size_t>(c)] = draw_hold();
    }
}

double ExcitationSignal::draw(int c) {
    std::uniform_real_distribution<double> u(policy_.lo[static_cast<std::size_t>(c)],
                                             policy_.hi[static_cast<std::size_t>(c)]);
    return u(rng_);
}

int ExcitationSignal::draw_hold() {
    std::geometric_distribution<int> g(1.0 / policy_.mean_hold);
    return 1 + g(rng_);
}

Inputs ExcitationSignal::next() {
    for (int c = 0; c < 4; ++c) {
        auto& left = hold_left_[static_cast<std::size_t>(c)];
        if (--left <= 0) {
            value_[static_cast<std::size_t>(c)] = draw(c);
            left = draw_hold();
        }
    }
    Inputs u;
    u.Q_pm = value_[0];
    u.Q_air = value_[1];
    u.Q_tm = value_[2];
    u.w_cryst = policy_.excite_w ? value_[3] : policy_.w_fixed;
    return u;
}

}  // namespace sfc::harness
