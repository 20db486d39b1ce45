#pragma once

#include <string>
#include <vector>

#include "urecon/checkpoint.hpp"
#include "urecon/mri.hpp"

// Synthetic training/testing data: phantoms, a shared coil array, masks and
// simulated acquisitions, all derived deterministically from one root seed
// with disjoint child streams for the two splits.

namespace urecon {

struct MaskSpec {
  bool random = false;
  std::size_t acceleration = 4;
  std::size_t center_lines = 8;
};

struct DatasetItem {
  ComplexImage x_ref;
  KspaceData y;
  Encoder encoder;
};

struct Dataset {
  std::size_t height = 0, width = 0, n_coils = 0;
  std::vector<DatasetItem> train_items, test_items;
};

namespace dataset_detail {

// Complex images serialize interleaved: row-major (re, im) pairs.
inline Tensor image_to_record(const ComplexImage& img) {
  Tensor t({img.height, img.width, 2});
  const double *re = img.re(), *im = img.im();
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    t[2 * i] = re[i];
    t[2 * i + 1] = im[i];
  }
  return t;
}

inline ComplexImage image_from_record(const Tensor& t) {
  if (t.shape.size() != 3 || t.shape[2] != 2)
    throw IoError("expected an [H,W,2] complex record");
  ComplexImage img(t.shape[0], t.shape[1]);
  double *re = img.re(), *im = img.im();
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    re[i] = t[2 * i];
    im[i] = t[2 * i + 1];
  }
  return img;
}

inline Tensor kspace_to_record(const KspaceData& y) {
  Tensor t({y.n_coils, y.height, y.width, 2});
  std::size_t off = 0;
  for (std::size_t c = 0; c < y.n_coils; ++c) {
    const double *re = y.coils[c].re(), *im = y.coils[c].im();
    for (std::size_t i = 0; i < y.coils[c].pixels(); ++i) {
      t[off + 2 * i] = re[i];
      t[off + 2 * i + 1] = im[i];
    }
    off += 2 * y.coils[c].pixels();
  }
  return t;
}

inline KspaceData kspace_from_record(const Tensor& t) {
  if (t.shape.size() != 4 || t.shape[3] != 2)
    throw IoError("expected an [C,H,W,2] k-space record");
  KspaceData y(t.shape[0], t.shape[1], t.shape[2]);
  std::size_t off = 0;
  for (std::size_t c = 0; c < y.n_coils; ++c) {
    double *re = y.coils[c].re(), *im = y.coils[c].im();
    for (std::size_t i = 0; i < y.coils[c].pixels(); ++i) {
      re[i] = t[off + 2 * i];
      im[i] = t[off + 2 * i + 1];
    }
    off += 2 * y.coils[c].pixels();
  }
  return y;
}

inline Tensor mask_to_record(const SamplingMask& m) {
  Tensor t({m.width});
  for (std::size_t i = 0; i < m.width; ++i)
    t[i] = m.sampled[i] ? 1.0 : 0.0;
  return t;
}

inline SamplingMask mask_from_record(const Tensor& t) {
  SamplingMask m;
  m.width = t.size();
  m.sampled.resize(m.width);
  for (std::size_t i = 0; i < m.width; ++i) m.sampled[i] = t[i] != 0.0;
  return m;
}

}  // namespace dataset_detail

inline Dataset make_dataset(std::size_t n_train, std::size_t n_test,
                            std::size_t h, std::size_t w, std::size_t n_coils,
                            const MaskSpec& mask, double sigma,
                            std::uint64_t seed) {
  if (n_train < 1 || n_test < 1)
    throw ContractError("dataset needs at least one item per split");
  Dataset ds;
  ds.height = h;
  ds.width = w;
  ds.n_coils = n_coils;
  const CoilMaps maps = make_coil_maps(n_coils, h, w);
  const Rng root(seed);
  const Rng train_stream = root.child(1);
  const Rng test_stream = root.child(2);
  auto build = [&](const Rng& stream, std::size_t count,
                   std::vector<DatasetItem>& out) {
    for (std::size_t i = 0; i < count; ++i) {
      const Rng item = stream.child(i);
      const std::uint64_t phantom_seed = Rng(item).next_u64();
      const std::uint64_t mask_seed = Rng(item).child(1).next_u64();
      const std::uint64_t noise_seed = Rng(item).child(2).next_u64();
      DatasetItem it;
      it.x_ref = make_phantom(h, w, phantom_seed);
      it.encoder.coils = maps;
      it.encoder.mask =
          mask.random
              ? make_random_mask(w, mask.acceleration, mask.center_lines,
                                 mask_seed)
              : make_uniform_mask(w, mask.acceleration, mask.center_lines);
      it.y = simulate_acquisition(it.x_ref, it.encoder, sigma, noise_seed);
      out.push_back(std::move(it));
    }
  };
  build(train_stream, n_train, ds.train_items);
  build(test_stream, n_test, ds.test_items);
  return ds;
}

inline void dataset_to_file(const Dataset& ds, TensorFile& f) {
  namespace d = dataset_detail;
  f.add("coilmaps", [&] {
    const CoilMaps& m = ds.train_items.empty() ? ds.test_items[0].encoder.coils
                                               : ds.train_items[0].encoder.coils;
    Tensor t({m.n_coils, m.height, m.width, 2});
    std::size_t off = 0;
    for (std::size_t c = 0; c < m.n_coils; ++c) {
      const double *re = m.maps[c].re(), *im = m.maps[c].im();
      for (std::size_t i = 0; i < m.maps[c].pixels(); ++i) {
        t[off + 2 * i] = re[i];
        t[off + 2 * i + 1] = im[i];
      }
      off += 2 * m.maps[c].pixels();
    }
    return t;
  }());
  auto dump = [&](const std::string& split,
                  const std::vector<DatasetItem>& items) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      const std::string stem = split + "." + std::to_string(i);
      f.add(stem + ".xref", d::image_to_record(items[i].x_ref));
      f.add(stem + ".y", d::kspace_to_record(items[i].y));
      f.add(stem + ".mask", d::mask_to_record(items[i].encoder.mask));
    }
  };
  dump("train", ds.train_items);
  dump("test", ds.test_items);
}

inline Dataset dataset_from_file(const TensorFile& f, std::size_t n_train,
                                 std::size_t n_test) {
  namespace d = dataset_detail;
  Dataset ds;
  const Tensor& maps_t = f.at("coilmaps");
  CoilMaps maps;
  maps.n_coils = maps_t.shape[0];
  maps.height = maps_t.shape[1];
  maps.width = maps_t.shape[2];
  std::size_t off = 0;
  for (std::size_t c = 0; c < maps.n_coils; ++c) {
    ComplexImage img(maps.height, maps.width);
    double *re = img.re(), *im = img.im();
    for (std::size_t i = 0; i < img.pixels(); ++i) {
      re[i] = maps_t[off + 2 * i];
      im[i] = maps_t[off + 2 * i + 1];
    }
    off += 2 * img.pixels();
    maps.maps.push_back(std::move(img));
  }
  ds.height = maps.height;
  ds.width = maps.width;
  ds.n_coils = maps.n_coils;
  auto read = [&](const std::string& split, std::size_t count,
                  std::vector<DatasetItem>& out) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::string stem = split + "." + std::to_string(i);
      DatasetItem it;
      it.x_ref = d::image_from_record(f.at(stem + ".xref"));
      it.y = d::kspace_from_record(f.at(stem + ".y"));
      it.encoder.coils = maps;
      it.encoder.mask = d::mask_from_record(f.at(stem + ".mask"));
      out.push_back(std::move(it));
    }
  };
  read("train", n_train, ds.train_items);
  read("test", n_test, ds.test_items);
  return ds;
}

}  // namespace urecon
