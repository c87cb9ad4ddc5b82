#pragma once

#include <compare>

#include "ecomail/errors.hpp"

namespace ecomail {

inline constexpr double kJoulesPerKwh = 3.6e6;
inline constexpr double kKwhPerMwh = 1000.0;
inline constexpr double kBytesPerGb = 1e9;  // decimal gigabyte

// Energy in kWh. Joules and MWh exist only at the boundaries.
struct EnergyAmount {
  double kwh = 0.0;

  // Checked constructor; energy is never negative.
  static EnergyAmount of(double kwh) {
    if (!(kwh >= 0.0)) throw domain_error("energy must be non-negative");
    return {kwh};
  }
  static EnergyAmount from_joules(double j) { return {j / kJoulesPerKwh}; }
  static EnergyAmount from_mwh(double mwh) { return {mwh * kKwhPerMwh}; }
  double joules() const { return kwh * kJoulesPerKwh; }
  double mwh() const { return kwh / kKwhPerMwh; }

  EnergyAmount& operator+=(EnergyAmount o) {
    kwh += o.kwh;
    return *this;
  }
  friend EnergyAmount operator+(EnergyAmount a, EnergyAmount b) { return {a.kwh + b.kwh}; }
  friend EnergyAmount operator*(EnergyAmount a, double s) { return {a.kwh * s}; }
  friend auto operator<=>(const EnergyAmount&, const EnergyAmount&) = default;
};

// US dollars.
struct MoneyAmount {
  double usd = 0.0;

  friend MoneyAmount operator+(MoneyAmount a, MoneyAmount b) { return {a.usd + b.usd}; }
  friend auto operator<=>(const MoneyAmount&, const MoneyAmount&) = default;
};

}  // namespace ecomail
