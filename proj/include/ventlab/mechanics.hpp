#pragma once

#include "ventlab/action.hpp"
#include "ventlab/twin.hpp"

namespace ventlab {

/// End-inspiratory / end-expiratory alveolar pressures of a periodic
/// pressure-controlled breath in a single-compartment RC lung.
struct BreathPressures {
  double end_inspiratory_cmH2O = 0;
  double end_expiratory_cmH2O = 0;
};

struct BreathTiming {
  double inspiratory_s = 0;
  double expiratory_s = 0;
};

BreathTiming breath_timing(double rr_per_min, IeRatio ie);

/// Time constant in seconds from resistance (cmH2O·s/L) and compliance (mL/cmH2O).
double time_constant_s(double resistance_cmH2O_s_per_L, double compliance_mL_per_cmH2O);

/// Closed-form solution of the two-equation periodic fixed point.
BreathPressures solve_breath_closed_form(double pip, double peep, BreathTiming t, double rc_s);

/// Picard iteration of the same fixed point, stopping when successive
/// iterates differ by less than tol.
BreathPressures solve_breath_iterative(double pip, double peep, BreathTiming t, double rc_s,
                                       double tol = 1e-13, int max_iter = 10000);

/// Breath mechanics of `twin` ventilated with `action`. Throws ParameterError
/// for a non-positive time constant.
MechanicsObservation simulate_breath_mechanics(const TwinState& twin, const Action& action);

}  // namespace ventlab
