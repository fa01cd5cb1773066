#include "ventlab/apache.hpp"

#include <algorithm>
#include <cmath>

namespace ventlab {
namespace apache {

int temperature_points(double t) {
  if (t >= 41) return 4;
  if (t >= 39) return 3;
  if (t >= 38.5) return 1;
  if (t >= 36) return 0;
  if (t >= 34) return 1;
  if (t >= 32) return 2;
  if (t >= 30) return 3;
  return 4;
}

int map_points(double m) {
  if (m >= 160) return 4;
  if (m >= 130) return 3;
  if (m >= 110) return 2;
  if (m >= 70) return 0;
  if (m >= 50) return 2;
  return 4;
}

int heart_rate_points(double hr) {
  if (hr >= 180) return 4;
  if (hr >= 140) return 3;
  if (hr >= 110) return 2;
  if (hr >= 70) return 0;
  if (hr >= 55) return 2;
  if (hr >= 40) return 3;
  return 4;
}

int respiratory_rate_points(double rr) {
  if (rr >= 50) return 4;
  if (rr >= 35) return 3;
  if (rr >= 25) return 1;
  if (rr >= 12) return 0;
  if (rr >= 10) return 1;
  if (rr >= 6) return 2;
  return 4;
}

int oxygenation_points(double fio2, double pao2, double paco2) {
  if (fio2 >= 0.5) {
    const double alveolar = fio2 * 713.0 - paco2 / 0.8;
    const double gradient = alveolar - pao2;
    if (gradient >= 500) return 4;
    if (gradient >= 350) return 3;
    if (gradient >= 200) return 2;
    return 0;
  }
  if (pao2 > 70) return 0;
  if (pao2 >= 61) return 1;
  if (pao2 >= 55) return 3;
  return 4;
}

int ph_points(double ph) {
  if (ph >= 7.7) return 4;
  if (ph >= 7.6) return 3;
  if (ph >= 7.5) return 1;
  if (ph >= 7.33) return 0;
  if (ph >= 7.25) return 2;
  if (ph >= 7.15) return 3;
  return 4;
}

int sodium_points(double na) {
  if (na >= 180) return 4;
  if (na >= 160) return 3;
  if (na >= 155) return 2;
  if (na >= 150) return 1;
  if (na >= 130) return 0;
  if (na >= 120) return 2;
  if (na >= 111) return 3;
  return 4;
}

int potassium_points(double k) {
  if (k >= 7) return 4;
  if (k >= 6) return 3;
  if (k >= 5.5) return 1;
  if (k >= 3.5) return 0;
  if (k >= 3) return 1;
  if (k >= 2.5) return 2;
  return 4;
}

int creatinine_points(double c) {
  if (c >= 3.5) return 4;
  if (c >= 2) return 3;
  if (c >= 1.5) return 2;
  if (c >= 0.6) return 0;
  return 2;
}

int hematocrit_points(double hct) {
  if (hct >= 60) return 4;
  if (hct >= 50) return 2;
  if (hct >= 46) return 1;
  if (hct >= 30) return 0;
  if (hct >= 20) return 2;
  return 4;
}

int wbc_points(double w) {
  if (w >= 40) return 4;
  if (w >= 20) return 2;
  if (w >= 15) return 1;
  if (w >= 3) return 0;
  if (w >= 1) return 2;
  return 4;
}

int gcs_points(double gcs) {
  const double g = std::clamp(std::round(gcs), 3.0, 15.0);
  return static_cast<int>(15.0 - g);
}

int age_points(double age) {
  const double a = std::floor(age);
  if (a <= 44) return 0;
  if (a <= 54) return 2;
  if (a <= 64) return 3;
  if (a <= 74) return 5;
  return 6;
}

}  // namespace apache

int apache2_score(const PatientState& s, double fio2) {
  using namespace apache;
  const int score = temperature_points(s[Channel::temp]) + map_points(s[Channel::map]) +
                    heart_rate_points(s[Channel::hr]) +
                    respiratory_rate_points(s[Channel::rr_measured]) +
                    oxygenation_points(fio2, s[Channel::pao2], s[Channel::paco2]) +
                    ph_points(s[Channel::ph]) + sodium_points(s[Channel::na]) +
                    potassium_points(s[Channel::k]) + creatinine_points(s[Channel::creatinine]) +
                    hematocrit_points(3.0 * s[Channel::hb]) + wbc_points(s[Channel::wbc]) +
                    gcs_points(s[Channel::gcs]) + age_points(s[Channel::age]);
  return std::clamp(score, 0, 71);
}

double predicted_mortality(double a) {
  return 1.0 / (1.0 + std::exp(-(-3.517 + 0.146 * a)));
}

}  // namespace ventlab
