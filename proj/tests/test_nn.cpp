#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "spn/error.hpp"
#include "spn/nn.hpp"

using namespace spn;
using namespace spn::nn;

TEST_CASE("huber branches") {
  CHECK(huber(0.0, 0.1) == 0.0);
  CHECK(huber(0.05, 0.1) == doctest::Approx(0.00125).epsilon(1e-12));
  CHECK(huber(1.0, 0.1) == doctest::Approx(0.095).epsilon(1e-12));
  CHECK(huber(-1.0, 0.1) == huber(1.0, 0.1));
  CHECK(huber_derivative(0.05, 0.1) == 0.05);
  CHECK(huber_derivative(-3.0, 0.1) == -0.1);
  CHECK_THROWS_AS(huber(1.0, 0.0), Error);
  for (int i = -400; i <= 400; ++i) {
    const double x = i * 0.01;
    CHECK(huber(x, 0.1) <= 0.5 * x * x);
    CHECK(huber(x, 0.1) == huber(-x, 0.1));
  }
}

TEST_CASE("total loss") {
  CHECK(total_loss(2.0, 3.0, 0.01) == doctest::Approx(2.03).epsilon(1e-12));
  CHECK(total_loss(2.0, 3.0, 0.0) == 2.0);
  CHECK(total_loss(2.0, 0.0, 0.5) == 2.0);
}

TEST_CASE("masked huber") {
  SparseDepthMap t(2, 2);
  t.set(1, 0, 0.4);
  std::vector<double> pred{9.0, 0.5, -7.0, 1e6};
  CHECK(masked_huber_loss<double>(pred, t, 0.1) == doctest::Approx(0.005).epsilon(1e-9));
  const double ref = masked_huber_loss<double>(pred, t, 0.1);
  pred[0] = -123.0;
  pred[3] = 0.0;
  CHECK(masked_huber_loss<double>(pred, t, 0.1) == ref);
  CHECK_THROWS_AS(masked_huber_loss<double>(pred, SparseDepthMap(2, 2), 0.1), Error);
  CHECK_THROWS_AS(masked_huber_loss<double>(std::vector<double>(3, 0.0), t, 0.1), Error);
  t.set(0, 1, 1.4);
  pred = {0, 0.5, 0.4, 0};
  CHECK(masked_huber_loss<double>(pred, t, 0.1, AuxReduction::Sum) ==
        doctest::Approx(2 * masked_huber_loss<double>(pred, t, 0.1)));
}

TEST_CASE("softmax and argmax") {
  const std::vector<double> z{1.0, -2.0, 700.0, 3.0, 700.0, -1e3};
  const auto p = softmax<double>(z);
  double sum = 0;
  for (double v : p) {
    sum += v;
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
  CHECK(argmax<double>(z) == 2);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> r(6);
    for (auto& v : r) v = rng.normal() * 5;
    const auto q = softmax<double>(r);
    double s = 0;
    for (double v : q) {
      s += v;
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("forward shapes") {
  const Network<float> net(NetworkConfig{}, 1);
  GrayImage img(64, 64, 90);
  const auto out = net.forward(img);
  CHECK(out.logits.size() == 6);
  CHECK(out.depth.size() == 64u * 64u);
  for (double v : out.logits) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(net.forward(GrayImage(32, 64)), Error);
}

TEST_CASE("zero parameters give a uniform softmax") {
  Network<double> net(NetworkConfig{}, 1);
  for (auto& t : net.params()) std::fill(t.data.begin(), t.data.end(), 0.0);
  const auto out = net.forward(GrayImage(64, 64, 200));
  const auto p = softmax<double>(out.logits);
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 6).epsilon(1e-15));
}

TEST_CASE("network config validation") {
  NetworkConfig c;
  c.input_width = 60;
  CHECK_THROWS_AS(c.validate(), Error);
  c = NetworkConfig{};
  c.trunk.clear();
  CHECK_THROWS_AS(c.validate(), Error);
  const auto back = network_config_from_json(to_json(gradcheck::toy_config()));
  CHECK(back.input_width == 8);
  CHECK(back.trunk.size() == 3);
  CHECK(back.downsampling() == 4);
}

TEST_CASE("gradients match finite differences on a toy network") {
  auto b = gradcheck::toy_batch(1, 3);
  Network<double> net(gradcheck::toy_config(), 5);
  LossConfig loss;
  loss.lambda_aux = 0.5;
  const auto r = gradcheck::check(net, b.samples, loss);
  CHECK(r.checked > 500);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("aux gradients vanish without the auxiliary term") {
  auto b = gradcheck::toy_batch(2, 2);
  const Network<double> net(gradcheck::toy_config(), 5);
  LossConfig loss;
  loss.lambda_aux = 0.0;
  std::vector<Tensor<double>> g;
  net.loss_and_gradients(b.samples, loss, &g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!net.is_aux(i)) continue;
    for (double v : g[i].data) CHECK(v == 0.0);
  }
}

TEST_CASE("duplicated sample gives the single-sample gradient") {
  auto b = gradcheck::toy_batch(3, 1);
  const Network<double> net(gradcheck::toy_config(), 9);
  const LossConfig loss;
  std::vector<Tensor<double>> g1, g2;
  const auto l1 = net.loss_and_gradients(b.samples, loss, &g1);
  std::vector<Sample> twice{b.samples[0], b.samples[0]};
  const auto l2 = net.loss_and_gradients(twice, loss, &g2);
  CHECK(l1.total == doctest::Approx(l2.total).epsilon(1e-14));
  for (std::size_t i = 0; i < g1.size(); ++i) {
    for (std::size_t k = 0; k < g1[i].size(); ++k) {
      CHECK(std::abs(g1[i].data[k] - g2[i].data[k]) <= 1e-14 * std::max(1.0, std::abs(g1[i].data[k])));
    }
  }
}

TEST_CASE("momentum step") {
  std::vector<Tensor<double>> p{Tensor<double>({1}, 0.0)};
  std::vector<Tensor<double>> g{Tensor<double>({1}, 1.0)};
  std::vector<Tensor<double>> v{Tensor<double>({1}, 0.0)};
  sgd_momentum_step(p, g, v, 0.1, 0.9);
  CHECK(p[0].data[0] == doctest::Approx(-0.1).epsilon(1e-15));
  sgd_momentum_step(p, g, v, 0.1, 0.9);
  CHECK(p[0].data[0] == doctest::Approx(-0.29).epsilon(1e-15));
  CHECK(v[0].data[0] == doctest::Approx(1.9).epsilon(1e-15));

  std::vector<Tensor<double>> q{Tensor<double>({2}, 3.0)};
  std::vector<Tensor<double>> z{Tensor<double>({2}, 0.0)};
  std::vector<Tensor<double>> w{Tensor<double>({2}, 0.0)};
  sgd_momentum_step(q, z, w, 0.1, 0.9);
  CHECK(q[0].data[0] == 3.0);
  std::vector<Tensor<double>> g3{Tensor<double>({2}, 2.0)};
  sgd_momentum_step(q, g3, w, 0.5, 0.0);
  CHECK(q[0].data[1] == 2.0);
  CHECK_THROWS_AS(sgd_momentum_step(p, z, v, 0.1, 0.9), Error);
}

TEST_CASE("sequence majority") {
  CHECK(sequence_correct(2, 3));
  CHECK_FALSE(sequence_correct(2, 4));
  CHECK(sequence_correct(3, 4));
  CHECK_FALSE(sequence_correct(0, 1));
  for (int n = 1; n <= 10; ++n) {
    for (int mask = 0; mask < (1 << n); ++mask) {
      std::vector<int> pattern;
      int c = 0;
      for (int i = 0; i < n; ++i) {
        pattern.push_back((mask >> i) & 1);
        c += pattern.back();
      }
      CHECK(sequence_correct(c, n) == oracle::majority_by_count(pattern));
    }
  }
}

TEST_CASE("evaluation") {
  std::vector<Sample> s;
  for (int i = 0; i < 3; ++i) s.push_back({nullptr, nullptr, 2, 10});
  for (int i = 0; i < 4; ++i) s.push_back({nullptr, nullptr, 1, 11});
  const std::vector<int> pred{2, 2, 0, 1, 1, 3, 3};
  const auto r = evaluate_predictions(pred, s);
  CHECK(r.sequences == 2);
  CHECK(r.images == 7);
  CHECK(r.sequence_accuracy == 0.5);
  CHECK(r.image_accuracy == doctest::Approx(4.0 / 7));
  CHECK(r.confusion[1][3] == 2);
  const std::vector<int> perfect{2, 2, 2, 1, 1, 1, 1};
  CHECK(evaluate_predictions(perfect, s).sequence_accuracy == 1.0);
  CHECK(evaluate_predictions(perfect, s).image_accuracy == 1.0);
  CHECK_THROWS_AS(evaluate_predictions({}, {}), Error);
}

TEST_CASE("training is deterministic and converges on a separable set") {
  // Two classes: dark versus bright images, 20 sequences of 3 frames.
  NetworkConfig cfg;
  cfg.input_width = 16;
  cfg.input_height = 16;
  cfg.trunk = {{4, true}, {8, true}};
  cfg.hidden = {8};
  std::vector<GrayImage> imgs;
  Rng rng(8);
  for (int seq = 0; seq < 20; ++seq) {
    for (int k = 0; k < 3; ++k) {
      GrayImage g(16, 16);
      for (auto& p : g.pixels) p = static_cast<std::uint8_t>((seq % 2 ? 170 : 40) + rng.below(40));
      imgs.push_back(g);
    }
  }
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    samples.push_back({&imgs[i], nullptr, static_cast<int>(i / 3) % 2, static_cast<int>(i / 3)});
  }
  LossConfig loss;
  loss.lambda_aux = 0.0;
  TrainConfig tc;
  tc.batch_size = 8;
  tc.learning_rate = 0.05;
  tc.max_epochs = 50;
  tc.plateau_tolerance = 0.0;
  const auto a = train<double>(samples, {}, cfg, loss, tc);
  const auto b = train<double>(samples, {}, cfg, loss, tc);
  for (std::size_t i = 0; i < a.network.params().size(); ++i) {
    CHECK(a.network.params()[i].data == b.network.params()[i].data);
  }
  bool reached = false;
  for (const auto& m : a.history) reached = reached || m.train_accuracy == 1.0;
  CHECK(reached);
  CHECK(evaluate(a.network, std::span<const Sample>(samples)).image_accuracy == 1.0);
  CHECK_THROWS_AS(train<double>({}, {}, cfg, loss, tc), Error);
}

TEST_CASE("lambda zero never moves the auxiliary parameters") {
  auto b = gradcheck::toy_batch(6, 10);
  LossConfig loss;
  loss.lambda_aux = 0.0;
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 3;
  const Network<double> init(gradcheck::toy_config(), tc.seed);
  const auto r = train<double>(b.samples, {}, gradcheck::toy_config(), loss, tc);
  for (std::size_t i = 0; i < init.params().size(); ++i) {
    if (init.is_aux(i)) CHECK(r.network.params()[i].data == init.params()[i].data);
  }
}

TEST_CASE("plateau stop") {
  auto b = gradcheck::toy_batch(6, 4);
  TrainConfig tc;
  tc.max_epochs = 40;
  tc.learning_rate = 1e-12;
  const auto r = train<double>(b.samples, {}, gradcheck::toy_config(), LossConfig{}, tc);
  CHECK(r.history.size() == 6);
}

TEST_CASE("checkpoint round trip") {
  const Network<double> net(gradcheck::toy_config(), 17);
  const auto bytes = encode_checkpoint(net);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SPN1");
  const auto back = decode_checkpoint<double>(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.names() == net.names());
  const Network<float> f(gradcheck::toy_config(), 17);
  const auto fb = decode_checkpoint<float>(encode_checkpoint(f));
  CHECK(fb.params()[0].data == f.params()[0].data);

  auto bad = bytes;
  bad[1] = 'Q';
  CHECK_THROWS_AS(decode_checkpoint<double>(bad), Error);
  auto trunc = bytes;
  trunc.resize(bytes.size() - 8);
  CHECK_THROWS_AS(decode_checkpoint<double>(trunc), Error);

  const auto path = (std::filesystem::temp_directory_path() / "spn_ckpt.spn").string();
  save_checkpoint(net, path);
  CHECK(encode_checkpoint(load_checkpoint<double>(path)) == bytes);
  std::filesystem::remove(path);
}

TEST_CASE("metrics CSV header") {
  std::vector<EpochMetrics> h(2);
  h[1].epoch = 2;
  const auto csv = metrics_csv(h);
  CHECK(csv.rfind("epoch,loss,class_loss,aux_loss,train_acc,test_img_acc,test_seq_acc\n", 0) == 0);
}
