#pragma once

#include "signmotion/types.hpp"

#include <filesystem>
#include <vector>

namespace signmotion {

// PCA subspace of feasible poses, operating on flattened 3D joint positions
// of a chain subset. Rows of basis are orthonormal and ordered by decreasing
// singular value.
struct PCAPrior {
  Vec mean;   // length N*3
  Mat basis;  // d x (N*3)

  Index component_count() const { return basis.rows(); }
  void validate() const;  // orthonormality within 1e-6
};

// mean = column mean, basis = top-d right singular directions of the
// centered samples (K x n). Throws DimensionError when d > min(K, n).
PCAPrior fit_prior(const Mat& samples, Index d);

// || x - reconstruct(x) ||_2 with reconstruct = mu + ((x - mu) U^T) U.
Scalar prior_loss(const PCAPrior& prior, const Vec& x);

Vec reconstruct(const PCAPrior& prior, const Vec& x);

// d prior_loss / d x; zero at exact reconstruction (subgradient choice).
Vec prior_loss_gradient(const PCAPrior& prior, const Vec& x);

// Checkpoint: array container {mu, U} plus a JSON sidecar (path + ".json")
// carrying {d, joint_subset}.
void save_prior(const PCAPrior& prior, const std::vector<int>& joint_subset,
                const std::filesystem::path& path);
struct LoadedPrior {
  PCAPrior prior;
  std::vector<int> joint_subset;
};
LoadedPrior load_prior(const std::filesystem::path& path);

}  // namespace signmotion
