#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qsnn/data.hpp"

using namespace qsnn;
using namespace qsnn::data;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "qsnn_data_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("load_idx_images parses the big-endian header and scales to [0,1]") {
  auto p = tmp_file("tiny.idx");
  write_bytes(p, {0, 0, 8, 3,  0, 0, 0, 2,  0, 0, 0, 1,  0, 0, 0, 1,  0, 255});
  Tensor t = load_idx_images(p.string());
  CHECK(t.shape == Shape{2, 1, 1});
  CHECK(t[0] == 0.f);
  CHECK(t[1] == 1.f);
}

TEST_CASE("load_idx_labels parses a label vector") {
  auto p = tmp_file("labels.idx");
  write_bytes(p, {0, 0, 8, 1,  0, 0, 0, 3,  7, 0, 2});
  auto labels = load_idx_labels(p.string());
  REQUIRE(labels.size() == 3);
  CHECK(labels[0] == 7);
  CHECK(labels[2] == 2);
}

TEST_CASE("idx loader rejects bad magic naming the offending bytes") {
  auto p = tmp_file("bad.idx");
  write_bytes(p, {0xDE, 0xAD, 0xBE, 0xEF, 0, 0, 0, 1});
  CHECK_THROWS_WITH_AS(load_idx_images(p.string()),
                       doctest::Contains("0xDEADBEEF"), std::runtime_error);
}

TEST_CASE("idx loader rejects truncated payloads") {
  auto p = tmp_file("trunc.idx");
  write_bytes(p, {0, 0, 8, 3,  0, 0, 0, 2,  0, 0, 0, 2,  0, 0, 0, 2,  1, 2, 3});
  CHECK_THROWS_WITH_AS(load_idx_images(p.string()), doctest::Contains("truncated"),
                       std::runtime_error);
}

TEST_CASE("idx round trip through the writer") {
  Tensor imgs(Shape{3, 4, 5});
  for (int64_t i = 0; i < imgs.numel(); ++i)
    imgs[i] = static_cast<float>((i * 37) % 256) / 255.f;
  auto pi = tmp_file("rt_images.idx");
  auto pl = tmp_file("rt_labels.idx");
  save_idx_images(pi.string(), imgs);
  save_idx_labels(pl.string(), {1, 0, 2});
  LabelledSet set = load_idx_pair(pi.string(), pl.string());
  CHECK(set.inputs.shape == Shape{3, 1, 4, 5});
  CHECK(set.num_classes == 3);
  for (int64_t i = 0; i < imgs.numel(); ++i)
    CHECK(set.inputs[i] == doctest::Approx(imgs[i]).epsilon(1e-6));
}

TEST_CASE("csv loader") {
  auto p = tmp_file("set.csv");
  std::ofstream out(p);
  out << "label,f0,f1\n1,0.25,0.5\n0,1.0,0.0\n";
  out.close();
  LabelledSet set = load_csv(p.string());
  CHECK(set.inputs.shape == Shape{2, 2});
  CHECK(set.labels[0] == 1);
  CHECK(set.inputs[1] == 0.5f);
  auto bad = tmp_file("bad.csv");
  std::ofstream b(bad);
  b << "x,f0\n1,0.5\n";
  b.close();
  CHECK_THROWS_AS(load_csv(bad.string()), std::runtime_error);
}

TEST_CASE("synth tasks are deterministic per seed") {
  for (auto kind : {SynthKind::TwoGaussians, SynthKind::XorPatterns, SynthKind::StripedImages}) {
    LabelledSet a = synth_task(kind, 64, 42);
    LabelledSet b = synth_task(kind, 64, 42);
    LabelledSet c = synth_task(kind, 64, 43);
    CHECK(a.inputs.data == b.inputs.data);
    CHECK(a.labels == b.labels);
    CHECK(a.inputs.data != c.inputs.data);
    CHECK(a.size() == 64);
    for (float v : a.inputs.data) {
      CHECK(v >= 0.f);
      CHECK(v <= 1.f);
    }
  }
  CHECK_THROWS_AS(synth_task(SynthKind::TwoGaussians, 0, 1), std::invalid_argument);
}

TEST_CASE("two-gaussians: the optimal threshold scores the Gaussian overlap") {
  // classes 4 sigma apart: Bayes accuracy = Phi(2) ~ 0.9772
  LabelledSet set = synth_task(SynthKind::TwoGaussians, 100000, 7);
  int64_t correct = 0;
  for (int64_t i = 0; i < set.size(); ++i) {
    int pred = set.inputs[i * 2 + 0] > 0.5f ? 1 : 0;
    if (pred == set.labels[static_cast<size_t>(i)]) ++correct;
  }
  double acc = static_cast<double>(correct) / static_cast<double>(set.size());
  CHECK(acc > 0.9772 - 0.003);
  CHECK(acc < 0.9772 + 0.003);
}

TEST_CASE("xor-patterns defeat every linear classifier") {
  LabelledSet set = synth_task(SynthKind::XorPatterns, 10000, 11);
  double best = 0.0;
  // brute-force sweep over line angle and offset, both sign conventions
  for (int ai = 0; ai < 72; ++ai) {
    double angle = ai * M_PI / 72;
    double nx = std::cos(angle), ny = std::sin(angle);
    for (int oi = -20; oi <= 20; ++oi) {
      double off = 0.5 + oi * 0.025;
      int64_t hits = 0;
      for (int64_t i = 0; i < set.size(); ++i) {
        double proj = nx * set.inputs[i * 2] + ny * set.inputs[i * 2 + 1];
        int pred = proj > off ? 1 : 0;
        if (pred == set.labels[static_cast<size_t>(i)]) ++hits;
      }
      double acc = static_cast<double>(hits) / static_cast<double>(set.size());
      best = std::max(best, std::max(acc, 1.0 - acc));
    }
  }
  CHECK(best <= 0.55);
}

TEST_CASE("striped-images: geometry and class balance") {
  SynthOptions opts;
  opts.height = 16;
  opts.width = 16;
  LabelledSet set = synth_task(SynthKind::StripedImages, 200, 5, opts);
  CHECK(set.inputs.shape == Shape{200, 1, 16, 16});
  CHECK(set.num_classes == 10);
  std::vector<int> counts(10, 0);
  for (int y : set.labels) ++counts[static_cast<size_t>(y)];
  for (int c : counts) CHECK(c == 20);
}

TEST_CASE("make_batches: seed-determined permutation covering the set exactly") {
  LabelledSet set = synth_task(SynthKind::TwoGaussians, 10, 3);
  auto batches = data::make_batches(set, 4, 99);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].inputs.shape[0] == 4);
  CHECK(batches[2].inputs.shape[0] == 2);
  auto batches2 = data::make_batches(set, 4, 99);
  for (size_t i = 0; i < batches.size(); ++i)
    CHECK(batches[i].inputs.data == batches2[i].inputs.data);
  // multiset of first features preserved under the permutation
  std::vector<float> orig, shuffled;
  for (int64_t i = 0; i < set.size(); ++i) orig.push_back(set.inputs[i * 2]);
  for (const auto& b : batches)
    for (int64_t i = 0; i < b.inputs.shape[0]; ++i) shuffled.push_back(b.inputs[i * 2]);
  std::sort(orig.begin(), orig.end());
  std::sort(shuffled.begin(), shuffled.end());
  CHECK(orig == shuffled);
}
