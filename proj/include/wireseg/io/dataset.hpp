// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "wireseg/core/image.hpp"
#include "wireseg/io/png_io.hpp"

namespace wireseg {

namespace fs = std::filesystem;

struct IngestError {
  std::string file;
  std::string message;
};

struct IngestResult {
  std::vector<Sample> samples;
  std::vector<IngestError> errors;
};

// Dataset layout: <root>/images/*.png plus optional <root>/masks/*.png matched
// by filename stem. Samples come back sorted by stem; unreadable files and
// shape mismatches become per-file error entries and the batch continues.
inline IngestResult ingest_dataset(const std::string& root, DomainTag tag = DomainTag::target) {
  IngestResult out;
  const fs::path images = fs::path(root) / "images";
  const fs::path masks = fs::path(root) / "masks";
  if (!fs::is_directory(images))
    throw std::runtime_error("dataset root missing images/ directory: " + root);

  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(images))
    if (e.is_regular_file() && e.path().extension() == ".png") stems.push_back(e.path().stem().string());
  std::sort(stems.begin(), stems.end());

  const bool have_masks = fs::is_directory(masks);
  for (const auto& stem : stems) {
    Sample s;
    s.id = stem;
    s.tag = tag;
    const fs::path img_path = images / (stem + ".png");
    try {
      s.image = read_png_gray8(img_path.string());
    } catch (const std::exception& e) {
      out.errors.push_back({img_path.string(), e.what()});
      continue;
    }
    if (have_masks) {
      const fs::path mask_path = masks / (stem + ".png");
      if (fs::exists(mask_path)) {
        try {
          Mask m = read_png_mask(mask_path.string());
          if (m.h != s.image.h || m.w != s.image.w) {
            out.errors.push_back({mask_path.string(), "mask/image shape mismatch"});
            continue;
          }
          s.mask = std::move(m);
        } catch (const std::exception& e) {
          out.errors.push_back({mask_path.string(), e.what()});
          continue;
        }
      }
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

// Writes samples in the layout ingest_dataset expects.
inline void write_dataset(const std::string& root, const std::vector<Sample>& samples) {
  fs::create_directories(fs::path(root) / "images");
  bool any_mask = false;
  for (const auto& s : samples) any_mask = any_mask || s.mask.has_value();
  if (any_mask) fs::create_directories(fs::path(root) / "masks");
  for (const auto& s : samples) {
    write_png_gray8((fs::path(root) / "images" / (s.id + ".png")).string(), s.image);
    if (s.mask) write_png_mask((fs::path(root) / "masks" / (s.id + ".png")).string(), *s.mask);
  }
}

inline void write_pool(const std::string& root, const BackgroundPool& pool) {
  const fs::path dir = fs::path(root) / "pool";
  fs::create_directories(dir);
  char name[32];
  for (size_t i = 0; i < pool.patches.size(); ++i) {
    std::snprintf(name, sizeof(name), "patch_%04zu.png", i);
    write_png_gray8((dir / name).string(), pool.patches[i]);
  }
}

inline BackgroundPool read_pool(const std::string& root) {
  const fs::path dir = fs::path(root) / "pool";
  if (!fs::is_directory(dir)) throw std::runtime_error("missing pool/ directory under " + root);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  BackgroundPool pool;
  for (const auto& f : files) {
    pool.patches.push_back(read_png_gray8(f));
    pool.provenance.push_back(fs::path(f).stem().string());
  }
  pool.validate();
  return pool;
}

}  // namespace wireseg
