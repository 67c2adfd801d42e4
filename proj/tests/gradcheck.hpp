#pragma once
// Central-difference gradient check for Network<double>.

#include <algorithm>
#include <cmath>
#include <vector>

#include "spn/io.hpp"
#include "spn/nn.hpp"
#include "spn/random.hpp"
#include "spn/reprojection.hpp"

namespace gradcheck {

struct ToyBatch {
  std::vector<spn::GrayImage> images;
  std::vector<spn::SparseDepthMap> targets;
  std::vector<spn::nn::Sample> samples;
};

inline spn::nn::NetworkConfig toy_config() {
  spn::nn::NetworkConfig c;
  c.input_width = 8;
  c.input_height = 8;
  c.trunk = {{4, true}, {5, true}, {6, false}};
  c.hidden = {7};
  return c;
}

inline ToyBatch toy_batch(std::uint64_t seed, int n, int width = 8, int height = 8) {
  spn::Rng rng(seed);
  ToyBatch b;
  b.images.reserve(static_cast<std::size_t>(n));
  b.targets.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    spn::GrayImage img(width, height);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    b.images.push_back(img);
    spn::SparseDepthMap t(width, height);
    for (int v = 0; v < height; ++v) {
      for (int u = 0; u < width; ++u) {
        if (rng.uniform() < 0.4) t.set(u, v, rng.uniform(0.01, 0.4));
      }
    }
    b.targets.push_back(t);
  }
  for (int i = 0; i < n; ++i) {
    b.samples.push_back({&b.images[static_cast<std::size_t>(i)], &b.targets[static_cast<std::size_t>(i)],
                         static_cast<int>(rng.below(6)), i});
  }
  return b;
}

struct Report {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// |g - fd| / max(|g|, |fd|, floor) over every parameter entry.
inline Report check(spn::nn::Network<double>& net, const std::vector<spn::nn::Sample>& batch,
                    const spn::nn::LossConfig& loss, double step = 1e-6, double floor = 1e-6) {
  std::vector<spn::nn::Tensor<double>> grads;
  net.loss_and_gradients(batch, loss, &grads);
  Report r;
  for (std::size_t p = 0; p < net.params().size(); ++p) {
    auto& data = net.params()[p].data;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + step;
      const double up = net.loss_and_gradients(batch, loss, nullptr).total;
      data[i] = keep - step;
      const double down = net.loss_and_gradients(batch, loss, nullptr).total;
      data[i] = keep;
      const double fd = (up - down) / (2 * step);
      const double g = grads[p].data[i];
      const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor});
      r.max_rel = std::max(r.max_rel, rel);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace gradcheck
