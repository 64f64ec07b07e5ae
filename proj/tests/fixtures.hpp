#pragma once

#include "vrb/controller.hpp"
#include "vrb/sim.hpp"

namespace vrb::testing {

inline ScenarioConfig charging_config() { return ScenarioConfig{}; }

inline ScenarioConfig discharging_config() {
    ScenarioConfig cfg;
    cfg.mode = Mode::Discharging;
    cfg.soc0 = 0.9;
    cfg.soc_target = 0.1;
    cfg.X_s = 0.10;
    cfg.I_s = -20.0;
    return cfg;
}

inline ScenarioConfig config_for(Mode mode) {
    return mode == Mode::Charging ? charging_config() : discharging_config();
}

/// Sweep-derived box for the default scenario of each mode, computed once.
inline const RhoBox& swept_box(Mode mode) {
    static const RhoBox charging = sweep_rho_box(charging_config(), SweepOptions{}).box;
    static const RhoBox discharging = sweep_rho_box(discharging_config(), SweepOptions{}).box;
    return mode == Mode::Charging ? charging : discharging;
}

inline const GainSchedule& swept_schedule(Mode mode) {
    static const GainSchedule charging = synthesize(swept_box(Mode::Charging), 1.0);
    static const GainSchedule discharging = synthesize(swept_box(Mode::Discharging), 1.0);
    return mode == Mode::Charging ? charging : discharging;
}

inline ScenarioConfig with_box(ScenarioConfig cfg) {
    cfg.rho_box = swept_box(cfg.mode);
    return cfg;
}

}  // namespace vrb::testing
