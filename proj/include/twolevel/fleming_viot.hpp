#pragma once

#include <cstdint>
#include <iosfwd>
#include <json.hpp>
#include <vector>

#include "twolevel/measures.hpp"
#include "twolevel/moran.hpp"
#include "twolevel/rng.hpp"
#include "twolevel/test_function.hpp"

namespace twolevel {

/// Intensities of the diffusive regime: s = sigma/n, r = rho/m, n/m -> theta.
struct FVParams {
  double sigma = 0.0;
  double rho = 0.0;
  double theta = 1.0;
  double w = 1.0;

  void validate() const;
  bool operator==(const FVParams&) const = default;
};

nlohmann::json to_json(const FVParams& p);
FVParams fv_params_from_json(const nlohmann::json& j);

/// Chain with s = sigma/n, r = rho/m and clock sped up by n.
ChainParams rescaled_chain(int m, int n, const FVParams& fv);
/// Smallest n with n/m >= theta.
int n_for_theta(double theta, int m);

/// x -> x(1-x)(f''(x) - sigma f'(x)). The result carries no derivatives.
TestFunction operator_A(const TestFunction& f, double sigma);

/// <Af, nu> + w theta rho (<x f, nu> - <f, nu><x, nu>).
double limit_drift(const WeightedPoints& nu, const TestFunction& f, const FVParams& fv);
double limit_drift(const GridMeasure& nu, const TestFunction& f, const FVParams& fv);
double limit_drift(const LimitMeasure& nu, const TestFunction& f, const FVParams& fv);

/// Both forms of the limit QV rate.
struct QvRate {
  double q_form;     // 2 w theta (<f^2> - <f>^2)
  double pair_form;  // w theta sum_ij nu_i nu_j (f_i - f_j)^2
  double value() const { return pair_form; }
};

QvRate limit_qv_rate(const WeightedPoints& nu, const TestFunction& f, const FVParams& fv);
QvRate limit_qv_rate(const GridMeasure& nu, const TestFunction& f, const FVParams& fv);
QvRate limit_qv_rate(const LimitMeasure& nu, const TestFunction& f, const FVParams& fv);

/// Drift of <f, nu^{m,n}> in rescaled time, written out from sigma and rho:
///   sum_k nu_k x(1-x) [D_xx f - sigma D^- f] + w rho (n/m) (<x f> - <f><x>).
/// params must come from rescaled_chain.
double rescaled_drift(const ChainState& state, const ChainParams& params, const TestFunction& f);
/// QV rate in rescaled time:
///   (1/m) sum_k nu_k x(1-x) [(D^+ f)^2 + (1 + sigma/n)(D^- f)^2]
///   + w (n/m) sum_ij nu_i nu_j (1 + (rho/m) j/n) (f_i - f_j)^2.
double rescaled_qv(const ChainState& state, const ChainParams& params, const TestFunction& f);

struct FVStudyTolerances {
  double mean_se = 3.0;        // |mean N_T| <= mean_se * SE
  double variance_rel = 0.20;  // |var - QV| <= variance_rel * QV
};

struct FVStudyResult {
  FVParams fv;
  int m = 0;
  int n = 0;
  double horizon = 0.0;
  std::string observable;
  std::uint64_t seed = 0;
  FVStudyTolerances tolerances;

  std::vector<double> samples;          // N_T per replica
  std::vector<double> qv_samples;       // int_0^T rescaled_qv per replica
  std::vector<double> limit_qv_samples; // int_0^T limit_qv_rate(nu_t) per replica

  double mean = 0.0;
  double se = 0.0;
  double variance = 0.0;
  double qv_mean = 0.0;
  double limit_qv_mean = 0.0;

  bool mean_pass = false;
  bool variance_pass = false;        // against qv_mean
  bool limit_variance_pass = false;  // against limit_qv_mean

  bool passed() const { return mean_pass && variance_pass; }
};

/// Simulates `replicas` rescaled chains from i.i.d. draws of nu0 and collects
/// N_T(f) = <f, nu_T> - <f, nu_0> - int_0^T rescaled_drift. Throws
/// ValidationError for fewer than 100 replicas.
FVStudyResult fv_martingale_study(const GridMeasure& nu0, int m, int n, const FVParams& fv, const TestFunction& f,
                                  double horizon, std::size_t replicas, Rng& rng, const FVStudyTolerances& tol = {},
                                  unsigned threads = 0);

nlohmann::json to_json(const FVStudyResult& r);
/// Columns replica, n_t, qv, limit_qv.
void write_samples_csv(const FVStudyResult& r, std::ostream& out);

}  // namespace twolevel
