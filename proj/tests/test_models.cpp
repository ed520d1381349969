#include "support.hpp"

#include "neurodecode/errors.hpp"
#include "neurodecode/models.hpp"
#include "neurodecode/signal.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <fstream>

using namespace neurodecode;
using namespace neurodecode::models;

namespace {

ad::Tensor<float> random_batch(std::size_t b, Rng& rng) {
  ad::Tensor<float> x({b, 63, 50});
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  return x;
}

ad::Tensor<float> logits(Model<float>& m, const ad::Tensor<float>& x) {
  ad::Tape<float> tape(&m.params());
  return m.forward(tape, x, false).value();
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FormatErrorKind checkpoint_error(const std::filesystem::path& p) {
  try {
    load_checkpoint(p);
  } catch (const FormatError& e) {
    return e.kind();
  }
  FAIL("corrupted checkpoint loaded");
  return FormatErrorKind::io;
}

}  // namespace

TEST_CASE("parameter audit against the reference counts", "[models]") {
  const auto report = audit_params(0.3);
  REQUIRE(report.rows.size() == 15);
  CHECK(report.within_budget >= 12);
  CHECK(report.ordering_ok);
  CHECK(target_param_count(Arch::eegnet, Size::small) == 1888);
  CHECK(target_param_count(Arch::conformer, Size::small) == 36026);
  for (const auto& r : report.rows) {
    Model<float> m(ModelSpec::make(r.arch, r.size), 0);
    CHECK(static_cast<std::int64_t>(m.count_params()) == r.actual);
  }
}

TEST_CASE("every build maps a batch to logits of the right shape", "[models]") {
  Rng rng(1);
  const auto x = random_batch(3, rng);
  for (const auto arch : kArchs) {
    Model<float> m(ModelSpec::make(arch, Size::small), 7);
    const auto y = logits(m, x);
    CHECK(y.shape == ad::Shape{3, 2});
    for (float v : y.data) CHECK(std::isfinite(v));
  }
}

TEST_CASE("eval-mode outputs do not depend on the rest of the batch", "[models]") {
  Rng rng(2);
  const auto x = random_batch(4, rng);
  for (const auto arch : kArchs) {
    Model<float> m(ModelSpec::make(arch, Size::small), 3);
    const auto full = logits(m, x);
    // Reversed batch order must permute the outputs identically.
    ad::Tensor<float> rev(x.shape);
    const std::size_t stride = 63 * 50;
    for (std::size_t b = 0; b < 4; ++b) {
      std::copy_n(x.ptr() + b * stride, stride, rev.ptr() + (3 - b) * stride);
    }
    const auto r = logits(m, rev);
    for (std::size_t b = 0; b < 4; ++b) {
      ad::Tensor<float> one({1, 63, 50});
      std::copy_n(x.ptr() + b * stride, stride, one.ptr());
      const auto single = logits(m, one);
      for (std::size_t c = 0; c < 2; ++c) {
        CHECK(single[c] == Catch::Approx(full[b * 2 + c]).epsilon(1e-5).margin(1e-6));
        CHECK(r[(3 - b) * 2 + c] == Catch::Approx(full[b * 2 + c]).epsilon(1e-5).margin(1e-6));
      }
    }
  }
}

TEST_CASE("initialization is deterministic per seed", "[models]") {
  for (const auto arch : kArchs) {
    Model<float> a(ModelSpec::make(arch, Size::small), 11), b(ModelSpec::make(arch, Size::small), 11),
        c(ModelSpec::make(arch, Size::small), 12);
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
      all_equal = all_equal && a.params()[i].value == b.params()[i].value;
      any_diff = any_diff || !(a.params()[i].value == c.params()[i].value);
    }
    CHECK(all_equal);
    CHECK(any_diff);
  }
}

TEST_CASE("dropout only acts in training mode with a generator", "[models]") {
  Rng rng(4);
  const auto x = random_batch(2, rng);
  Model<float> m(ModelSpec::make(Arch::lstm, Size::small), 5);
  const auto eval = logits(m, x);
  ad::Tape<float> t1(&m.params());
  const auto no_rng = m.forward(t1, x, true, nullptr).value();
  CHECK(no_rng == eval);
  Rng drop(9);
  ad::Tape<float> t2(&m.params());
  const auto dropped = m.forward(t2, x, true, &drop).value();
  CHECK_FALSE(dropped == eval);
}

TEST_CASE("a constant added to one channel vanishes after z-scoring", "[models]") {
  Rng rng(6);
  signal::Epoch e;
  e.t0_offset = 20;
  e.data = Eigen::MatrixXd::NullaryExpr(63, 70, [&] { return rng.normal(); });
  signal::Epoch shifted = e;
  shifted.data.row(10).array() += 3.0;
  const Eigen::MatrixXd a = signal::crop_and_zscore(e), b = signal::crop_and_zscore(shifted);
  ad::Tensor<float> xa({1, 63, 50}), xb({1, 63, 50});
  for (Eigen::Index c = 0; c < 63; ++c) {
    for (Eigen::Index t = 0; t < 50; ++t) {
      xa[static_cast<std::size_t>(c * 50 + t)] = static_cast<float>(a(c, t));
      xb[static_cast<std::size_t>(c * 50 + t)] = static_cast<float>(b(c, t));
    }
  }
  for (const auto arch : {Arch::eegnet, Arch::conformer}) {
    Model<float> m(ModelSpec::make(arch, Size::small), 1);
    const auto ya = logits(m, xa), yb = logits(m, xb);
    for (std::size_t c = 0; c < 2; ++c) CHECK(ya[c] == Catch::Approx(yb[c]).margin(1e-5));
  }
}

TEST_CASE("model spec validation and JSON round trip", "[models]") {
  for (const auto arch : kArchs) {
    for (const auto size : kSizes) {
      const auto spec = ModelSpec::make(arch, size);
      CHECK(ModelSpec::from_json(spec.to_json()) == spec);
      CHECK(spec.dropout == default_dropout(size));
    }
  }
  auto bad = ModelSpec::make(Arch::eegnet, Size::small);
  bad.dropout = 0.3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ModelSpec::make(Arch::dgcnn, Size::small);
  bad.hyper.erase("K");
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(arch_from_string("resnet"), ConfigError);
}

TEST_CASE("small-model gradients agree with finite differences", "[models][gradcheck]") {
  ad::GradCheckOptions opts;
  opts.max_entries_per_tensor = 4;
  for (const auto arch : kArchs) {
    const auto r = model_grad_check(arch, Size::small, opts, 2);
    INFO(to_string(arch) << " worst " << r.worst.tensor << "[" << r.worst.index << "]");
    CHECK(r.max_error < 1e-4);
    CHECK(r.checked > 0);
  }
}

TEST_CASE("checkpoints round-trip bitwise", "[models][io]") {
  const auto dir = testing::scratch_dir("models_ckpt");
  Rng rng(8);
  const auto x = random_batch(2, rng);
  for (const auto arch : kArchs) {
    Model<float> m(ModelSpec::make(arch, Size::small), 21);
    // Perturb batch-norm statistics so they must be saved too.
    for (auto& bn : m.batch_norms()) {
      for (auto& v : bn.running_mean.data) v = static_cast<float>(rng.normal());
    }
    const auto path = dir / (std::string(to_string(arch)) + ".ckpt");
    save_checkpoint(m, path);
    auto back = load_checkpoint(path);
    CHECK(back.spec() == m.spec());
    REQUIRE(back.params().size() == m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      CHECK(back.params()[i].name == m.params()[i].name);
      CHECK(back.params()[i].value == m.params()[i].value);
    }
    for (std::size_t i = 0; i < m.batch_norms().size(); ++i) {
      CHECK(back.batch_norms()[i].running_mean == m.batch_norms()[i].running_mean);
      CHECK(back.batch_norms()[i].running_var == m.batch_norms()[i].running_var);
    }
    CHECK(logits(back, x) == logits(m, x));
    const auto again = dir / "again.ckpt";
    save_checkpoint(back, again);
    CHECK(read_bytes(again) == read_bytes(path));
  }
}

TEST_CASE("corrupted checkpoints raise distinct errors", "[models][io]") {
  const auto dir = testing::scratch_dir("models_bad");
  const auto path = dir / "m.ckpt";
  save_checkpoint(Model<float>(ModelSpec::make(Arch::eegnet, Size::small), 0), path);
  const auto good = read_bytes(path);
  auto bytes = good;
  bytes[1] = 'X';
  write_bytes(path, bytes);
  CHECK(checkpoint_error(path) == FormatErrorKind::bad_magic);
  bytes = good;
  bytes[4] = 9;
  write_bytes(path, bytes);
  CHECK(checkpoint_error(path) == FormatErrorKind::version_mismatch);
  bytes = good;
  bytes.resize(bytes.size() - 3);
  write_bytes(path, bytes);
  CHECK(checkpoint_error(path) == FormatErrorKind::truncated_payload);
}
