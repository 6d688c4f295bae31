#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "oracles.hpp"
#include "stereoloc/postprocess.hpp"

using namespace stereoloc;
using namespace stereoloc::postprocess;

namespace {

Detection det(double conf, Box b = {0.5, 0.5, 0.2, 0.2}, int cls = kCarClass, int index = 0) {
  Detection d;
  d.box = b;
  d.confidence = conf;
  d.class_id = cls;
  d.index = index;
  return d;
}

std::vector<Detection> random_dets(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> c(0.0, 1.0), e(0.02, 0.5);
  std::uniform_int_distribution<int> cls(0, 2), tick(0, 20);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(det(tick(rng) / 20.0, {c(rng), c(rng), e(rng), e(rng)}, cls(rng) == 0 ? 3 : kCarClass,
                      static_cast<int>(i)));
  return out;
}

bool same(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].index != b[i].index || a[i].box != b[i].box || a[i].confidence != b[i].confidence) return false;
  return true;
}

}  // namespace

TEST_SUITE("postprocess") {
  TEST_CASE("zero grid decodes to cell centres at anchor size") {
    const std::vector<double> grid(kGridSize * kGridSize * kGridChannels, 0.0);
    const auto dets = decode_grid(grid);
    REQUIRE(dets.size() == 845);
    const auto& anchors = default_anchors();
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const std::size_t a = i % 5, col = (i / 5) % 13, row = i / 65;
      const Box raw{(0.5 + col) / 13.0, (0.5 + row) / 13.0, anchors[a].w / 13.0, anchors[a].h / 13.0};
      const Box want = clip_to_unit(raw);
      CHECK(dets[i].box.cx == doctest::Approx(want.cx).epsilon(1e-15));
      CHECK(dets[i].box.cy == doctest::Approx(want.cy).epsilon(1e-15));
      CHECK(dets[i].box.w == doctest::Approx(want.w).epsilon(1e-15));
      CHECK(dets[i].box.h == doctest::Approx(want.h).epsilon(1e-15));
      CHECK(dets[i].confidence == doctest::Approx(0.025).epsilon(1e-15));
      CHECK(dets[i].index == static_cast<int>(i));
    }
  }

  TEST_CASE("interior zero-logit boxes are exact cell centres") {
    const std::vector<double> grid(kGridSize * kGridSize * kGridChannels, 0.0);
    const auto d = decode_grid(grid)[(6 * 13 + 6) * 5];
    CHECK(d.box.cx == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(d.box.cy == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(d.box.w == doctest::Approx(1.0 / 13.0).epsilon(1e-15));
    CHECK(d.box.h == doctest::Approx(1.2 / 13.0).epsilon(1e-15));
  }

  TEST_CASE("one saturated objectness gives one confident box") {
    GridLayout layout;
    std::vector<double> grid(layout.cell_values(), 0.0);
    for (std::size_t i = 4; i < grid.size(); i += 25) grid[i] = -20.0;
    const std::size_t off = layout.offset(4, 9, 2);
    grid[off + 4] = 20.0;
    grid[off + 5 + kCarClass] = 3.0;
    double z = 0.0;
    for (int k = 0; k < 20; ++k) z += std::exp(grid[off + 5 + k]);
    const auto selected = select_detections(decode_grid(grid));
    REQUIRE(selected.size() == 1);
    CHECK(selected[0].index == (4 * 13 + 9) * 5 + 2);
    CHECK(selected[0].class_id == kCarClass);
    CHECK(selected[0].confidence == doctest::Approx(std::exp(3.0) / z).epsilon(1e-8));
  }

  TEST_CASE("decoded boxes lie within the image") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd(0.0, 3.0);
    std::vector<double> grid(kGridSize * kGridSize * kGridChannels);
    for (auto& v : grid) v = nd(rng);
    for (const auto& d : decode_grid(grid)) {
      CHECK(d.box.x1() >= 0.0);
      CHECK(d.box.x2() <= 1.0 + 1e-15);
      CHECK(d.box.y1() >= 0.0);
      CHECK(d.box.y2() <= 1.0 + 1e-15);
      CHECK(d.confidence >= 0.0);
      CHECK(d.confidence <= 1.0);
    }
  }

  TEST_CASE("encode then decode recovers the box") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> c(0.01, 0.99), e(0.02, 0.9);
    for (int trial = 0; trial < 500; ++trial) {
      const GroundTruthBox gt{c(rng), c(rng), e(rng), e(rng), kCarClass};
      const auto cell = assign(gt, default_anchors(), kGridSize);
      const auto enc = encode(gt.box(), cell, default_anchors(), kGridSize);
      const Box back = decode(logit(enc.x), logit(enc.y), enc.tw, enc.th, cell, default_anchors(), kGridSize);
      CHECK(std::abs(back.cx - gt.cx) < 1e-9);
      CHECK(std::abs(back.cy - gt.cy) < 1e-9);
      CHECK(std::abs(back.w - gt.w) < 1e-9);
      CHECK(std::abs(back.h - gt.h) < 1e-9);
    }
  }

  TEST_CASE("select keeps everything above the threshold") {
    const std::vector<Detection> in{det(0.9, {}, kCarClass, 0), det(0.6, {}, kCarClass, 1), det(0.4, {}, kCarClass, 2)};
    const auto out = select_detections(in);
    REQUIRE(out.size() == 2);
    CHECK(out[0].confidence == 0.9);
    CHECK(out[1].confidence == 0.6);
  }

  TEST_CASE("select falls back to the best box") {
    const std::vector<Detection> in{det(0.4, {}, kCarClass, 0), det(0.3, {}, kCarClass, 1)};
    const auto out = select_detections(in);
    REQUIRE(out.size() == 1);
    CHECK(out[0].confidence == 0.4);
  }

  TEST_CASE("select breaks ties by decode order") {
    const std::vector<Detection> in{det(0.2, {}, kCarClass, 0), det(0.2, {}, kCarClass, 1), det(0.2, {}, kCarClass, 2)};
    const auto out = select_detections(in);
    REQUIRE(out.size() == 1);
    CHECK(out[0].index == 0);
  }

  TEST_CASE("select uses a strict threshold") {
    const std::vector<Detection> in{det(0.5, {}, kCarClass, 0), det(0.5, {}, kCarClass, 1)};
    CHECK(select_detections(in).size() == 1);
  }

  TEST_CASE("select rejects empty input") {
    CHECK_THROWS_AS(select_detections(std::vector<Detection>{}), std::invalid_argument);
  }

  TEST_CASE("select is never empty") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) CHECK_FALSE(select_detections(random_dets(rng, 1 + trial % 20)).empty());
  }

  TEST_CASE("nms of identical boxes keeps the stronger one") {
    const std::vector<Detection> in{det(0.8, {0.5, 0.5, 0.2, 0.2}, kCarClass, 0), det(0.9, {0.5, 0.5, 0.2, 0.2}, kCarClass, 1)};
    const auto out = nms(in);
    REQUIRE(out.size() == 1);
    CHECK(out[0].confidence == 0.9);
  }

  TEST_CASE("nms keeps disjoint boxes") {
    const std::vector<Detection> in{det(0.8, {0.2, 0.2, 0.1, 0.1}, kCarClass, 0),
                                    det(0.9, {0.7, 0.7, 0.1, 0.1}, kCarClass, 1)};
    CHECK(nms(in).size() == 2);
  }

  TEST_CASE("nms is per class") {
    const std::vector<Detection> in{det(0.8, {0.5, 0.5, 0.2, 0.2}, kCarClass, 0), det(0.9, {0.5, 0.5, 0.2, 0.2}, 3, 1)};
    CHECK(nms(in).size() == 2);
  }

  TEST_CASE("nms matches the exhaustive reference") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto in = random_dets(rng, 1 + trial % 20);
      CHECK(same(nms(in), oracle::nms(in, kNmsIouThreshold)));
    }
  }

  TEST_CASE("nms output is a separated subset of the input") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      const auto in = random_dets(rng, 20);
      const auto out = nms(in);
      for (const auto& d : out)
        CHECK(std::any_of(in.begin(), in.end(), [&](const Detection& e) { return e.index == d.index; }));
      for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = i + 1; j < out.size(); ++j)
          if (out[i].class_id == out[j].class_id) CHECK(iou(out[i].box, out[j].box) <= kNmsIouThreshold);
    }
  }

  TEST_CASE("top proposals are the strongest survivors") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
      const auto in = random_dets(rng, 20);
      const auto kept = nms(in);
      const auto top = top_proposals(in, 5);
      CHECK(top.size() == std::min<std::size_t>(5, kept.size()));
      for (std::size_t i = 0; i < top.size(); ++i) CHECK(top[i].index == kept[i].index);
    }
  }
}
