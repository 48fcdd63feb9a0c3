#include "signmotion/pose_prior.hpp"

#include "signmotion/container.hpp"
#include "signmotion/errors.hpp"

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include <fstream>

namespace signmotion {

void PCAPrior::validate() const {
  if (basis.cols() != mean.size())
    throw DimensionError("prior: basis width does not match mean");
  const Mat gram = basis * basis.transpose();
  if ((gram - Mat::Identity(basis.rows(), basis.rows())).cwiseAbs().maxCoeff() > 1e-6)
    throw DimensionError("prior: basis rows are not orthonormal");
}

PCAPrior fit_prior(const Mat& samples, Index d) {
  const Index k = samples.rows();
  const Index n = samples.cols();
  if (k < 2) throw DimensionError("fit_prior: need at least 2 samples");
  if (d < 1 || d > std::min(k, n))
    throw DimensionError("fit_prior: invalid component count " + std::to_string(d));
  if (!samples.allFinite()) throw DimensionError("fit_prior: non-finite samples");

  PCAPrior prior;
  prior.mean = samples.colwise().mean();
  const Mat centered = samples.rowwise() - prior.mean.transpose();
  Eigen::JacobiSVD<Mat> svd(centered, Eigen::ComputeThinV);
  prior.basis = svd.matrixV().leftCols(d).transpose();
  return prior;
}

Vec reconstruct(const PCAPrior& prior, const Vec& x) {
  if (x.size() != prior.mean.size())
    throw DimensionError("prior: input dimension mismatch");
  const Vec centered = x - prior.mean;
  return prior.mean + prior.basis.transpose() * (prior.basis * centered);
}

Scalar prior_loss(const PCAPrior& prior, const Vec& x) {
  return (x - reconstruct(prior, x)).norm();
}

Vec prior_loss_gradient(const PCAPrior& prior, const Vec& x) {
  const Vec residual = x - reconstruct(prior, x);
  const Scalar norm = residual.norm();
  if (norm == 0) return Vec::Zero(x.size());
  return residual / norm;
}

void save_prior(const PCAPrior& prior, const std::vector<int>& joint_subset,
                const std::filesystem::path& path) {
  ArrayContainer c;
  c.add("mu", prior.mean);
  c.add("U", prior.basis);
  c.save(path);
  nlohmann::json sidecar;
  sidecar["d"] = prior.component_count();
  sidecar["joint_subset"] = joint_subset;
  std::ofstream os(path.string() + ".json");
  if (!os) throw FormatError("prior: cannot write sidecar for '" + path.string() + "'");
  os << sidecar.dump(2) << "\n";
}

LoadedPrior load_prior(const std::filesystem::path& path) {
  const ArrayContainer c = ArrayContainer::load(path);
  LoadedPrior out;
  out.prior.mean = c.vector_at("mu");
  out.prior.basis = c.at("U");
  std::ifstream is(path.string() + ".json");
  if (!is) throw FormatError("prior: missing sidecar for '" + path.string() + "'");
  nlohmann::json sidecar;
  try {
    is >> sidecar;
    out.joint_subset = sidecar.at("joint_subset").get<std::vector<int>>();
    if (sidecar.at("d").get<Index>() != out.prior.component_count())
      throw FormatError("prior: sidecar d disagrees with basis");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("prior: malformed sidecar: " + std::string(e.what()));
  }
  out.prior.validate();
  return out;
}

}  // namespace signmotion
