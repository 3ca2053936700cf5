#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spdyn/effects.hpp"
#include "spdyn/linalg.hpp"
#include "spdyn/panel.hpp"
#include "spdyn/weights.hpp"

namespace spdyn {

class Rng;

// Uniform draws on [mean - spread, mean + spread].
struct UniformDraw {
  double mean = 0.0;
  double spread = 0.0;
};

struct DgpSpec {
  Index n = 30;
  Index t = 100;
  Index k = 2;
  Index burn_in = 100;

  UniformDraw delta{-0.2, 0.0};
  UniformDraw psi{0.3, 0.0};
  std::vector<double> beta_mean;  // k entries; empty means all 1
  double beta_sd = 0.0;
  // Regressor noise of unit i is scaled by exp(slope_variance_link * eta_i),
  // eta_i the standardized draw behind its first slope. Positive values make
  // units with large slopes carry more regressor variance.
  double slope_variance_link = 0.0;

  std::optional<WeightScheme> w_true;  // static; nullopt means no network

  Index r_f = 2;      // factors shared by covariates and errors
  Index r_g = 0;      // error-only factors
  double factor_ar = 0.0;  // AR(1) coefficient of every factor, unit innovation variance scaled to unit variance
  double gamma_mean = 1.0, gamma_sd = 0.5;        // covariate loadings
  double lambda_mean = 0.0, lambda_sd = 0.5;      // error loadings on f
  double phi_mean = 0.0, phi_sd = 0.5;            // error loadings on g
  double loading_correlation = 0.0;  // corr(first covariate loading, lambda) per factor
  double noise_sd = 1.0;             // epsilon
  double x_noise_sd = 1.0;           // v
  double alpha_sd = 0.0;             // unit fixed effect in the growth equation
  std::uint64_t seed = 0;

  void validate() const;
};

struct Truth {
  VectorXd delta, psi;
  MatrixXd beta;        // N x k
  MatrixXd theta;       // N x (2 + k) in the estimator layout
  WeightScheme w;
  MatrixXd f, g;        // T x r_f, T x r_g over the stored window
  std::vector<MatrixXd> gamma;  // per unit, r_f x k
  MatrixXd lambda, phi;         // N x r_f, N x r_g
  VectorXd alpha;
  VectorXd x_noise_scale;
  MatrixXd u;           // N x T structural errors over the stored window
  MatrixXd eps;         // N x T idiosyncratic part of u
  VectorXd y_before;    // levels one period before the stored window
  VectorXd theta_mean;  // population mean of theta
};

struct SimulatedPanel {
  PanelDataset panel;
  Truth truth;
};

SimulatedPanel simulate(const DgpSpec& spec);

// Effects at common (psi, beta) computed by solving S x = e_j for every j and
// S r = 1 with a QR factorization; no inverse is formed.
EffectsTable brute_force_effects(const WeightScheme& w, double psi, const VectorXd& beta,
                                 const std::vector<std::string>& names);

// Every row links to between 1 and max_links distinct other units.
MatrixXd random_sparse_network(Index n, Index max_links, Rng& rng);
// Each off-diagonal cell is a link with probability p.
MatrixXd random_network(Index n, double p, Rng& rng);

std::vector<std::string> unit_labels(Index n, const std::string& prefix = "u");

}  // namespace spdyn
