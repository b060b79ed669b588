#include <doctest.h>

#include <set>

#include "advmim/datagen.hpp"

using namespace advmim;

namespace {

bool samples_equal(const ImageSample& a, const ImageSample& b) {
  return a.id == b.id && a.labeled == b.labeled && a.image.v == b.image.v && a.mask == b.mask &&
         a.withheld_mask == b.withheld_mask;
}

}  // namespace

TEST_CASE("generation is deterministic and in range") {
  Dataset a = generate_synthetic_dataset(4, 64, 64, 4, 7);
  Dataset b = generate_synthetic_dataset(4, 64, 64, 4, 7);
  REQUIRE(a.samples.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(samples_equal(a.samples[i], b.samples[i]));
  std::set<std::string> ids;
  for (const auto& s : a.samples) {
    ids.insert(s.id);
    REQUIRE(s.mask.has_value());
    for (float v : s.image.v) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    for (int c : *s.mask) {
      CHECK(c >= 0);
      CHECK(c <= 3);
    }
  }
  CHECK(ids.size() == 4);
}

TEST_CASE("every class appears in the default dataset") {
  Dataset d = generate_synthetic_dataset(200, 64, 64, 4, 1);
  std::set<int> seen;
  for (const auto& s : d.samples)
    for (int c : *s.mask) seen.insert(c);
  CHECK(seen == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("generation rejects bad dimensions") {
  CHECK_THROWS_AS(generate_synthetic_dataset(1, 60, 64, 4, 1), ConfigError);
}

TEST_CASE("split sizes and partition invariants") {
  Dataset d = generate_synthetic_dataset(100, 64, 64, 4, 2);
  auto [l3, u3] = split_dataset(d, 0.03, 5);
  CHECK(l3.samples.size() == 3);
  CHECK(u3.samples.size() == 97);
  auto [l10, u10] = split_dataset(d, 0.10, 5);
  CHECK(l10.samples.size() == 10);

  Dataset tiny = generate_synthetic_dataset(10, 64, 64, 4, 3);
  auto [l1, u1] = split_dataset(tiny, 0.03, 5);
  CHECK(l1.samples.size() == 1);  // max(1, round) rule

  // disjoint, union covers the input, unlabeled masks withheld
  std::set<std::string> lids, uids;
  for (const auto& s : l3.samples) {
    lids.insert(s.id);
    CHECK(s.labeled);
    CHECK(s.mask.has_value());
  }
  for (const auto& s : u3.samples) {
    uids.insert(s.id);
    CHECK(!s.labeled);
    CHECK(!s.mask.has_value());
    CHECK(s.withheld_mask.has_value());
  }
  std::set<std::string> inter;
  std::set_intersection(lids.begin(), lids.end(), uids.begin(), uids.end(),
                        std::inserter(inter, inter.begin()));
  CHECK(inter.empty());
  CHECK(lids.size() + uids.size() == 100);

  CHECK_THROWS_AS(split_dataset(d, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(d, 1.0, 1), ConfigError);
}

TEST_CASE("augmentation group structure") {
  Dataset d = generate_synthetic_dataset(1, 64, 64, 4, 9);
  const ImageSample& s = d.samples[0];
  CHECK(samples_equal(flip_horizontal(flip_horizontal(s)), s));
  CHECK(samples_equal(flip_vertical(flip_vertical(s)), s));
  CHECK(samples_equal(rot90(rot90(rot90(rot90(s)))), s));
  // augment is deterministic per seed, and image/mask transform jointly
  ImageSample a1 = augment_sample(s, 33);
  ImageSample a2 = augment_sample(s, 33);
  CHECK(samples_equal(a1, a2));
  // pixel-level consistency: class at a pixel follows the image content
  ImageSample r = rot90(s);
  int h = s.height(), w = s.width();
  for (int i = 0; i < h; i += 13)
    for (int j = 0; j < w; j += 13) {
      CHECK(r.image.at(i, j, 0) == s.image.at(j, w - 1 - i, 0));
      CHECK((*r.mask)[std::size_t(i * w + j)] == (*s.mask)[std::size_t(j * w + (w - 1 - i))]);
    }
}

TEST_CASE("seeded aligned crop") {
  Dataset d = generate_synthetic_dataset(1, 64, 64, 4, 10);
  const ImageSample& s = d.samples[0];
  // identity crop
  ImageSample full = crop_patch(s, 64, 5);
  CHECK(samples_equal(full, s));

  int oi = -1, oj = -1;
  ImageSample c = crop_patch(s, 32, 5, 8, &oi, &oj);
  CHECK(c.height() == 32);
  CHECK(c.width() == 32);
  CHECK(oi % 8 == 0);
  CHECK(oj % 8 == 0);
  for (int i = 0; i < 32; i += 7)
    for (int j = 0; j < 32; j += 7) {
      CHECK(c.image.at(i, j, 0) == s.image.at(oi + i, oj + j, 0));
      CHECK((*c.mask)[std::size_t(i * 32 + j)] ==
            (*s.mask)[std::size_t((oi + i) * 64 + (oj + j))]);
    }
  int oi2 = -2, oj2 = -2;
  crop_patch(s, 32, 5, 8, &oi2, &oj2);
  CHECK(oi2 == oi);
  CHECK(oj2 == oj);

  CHECK_THROWS_AS(crop_patch(s, 128, 5), ConfigError);
}
