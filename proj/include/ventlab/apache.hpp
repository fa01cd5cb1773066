#pragma once

#include "ventlab/patient_state.hpp"

namespace ventlab {

/// Published APACHE-II acute physiology point tables, one function per
/// variable. Values outside the tables fall into the nearest (outermost) band.
namespace apache {
int temperature_points(double temp_C);
int map_points(double map_mmHg);
int heart_rate_points(double hr_bpm);
int respiratory_rate_points(double rr_per_min);
/// A-a gradient points when FiO2 >= 0.5, PaO2 points otherwise.
int oxygenation_points(double fio2, double pao2_mmHg, double paco2_mmHg);
int ph_points(double ph);
int sodium_points(double na);
int potassium_points(double k);
int creatinine_points(double creatinine_mg_per_dL);
int hematocrit_points(double hct_percent);
int wbc_points(double wbc_k_per_uL);
int gcs_points(double gcs);
int age_points(double age_years);
}  // namespace apache

/// APACHE-II without chronic-health points. `fio2` is the inspired fraction in
/// effect when the state was measured. Result lies in [0, 71].
int apache2_score(const PatientState& s, double fio2);

/// Published APACHE-II risk logistic without the diagnostic-category weight.
double predicted_mortality(double apache);

}  // namespace ventlab
