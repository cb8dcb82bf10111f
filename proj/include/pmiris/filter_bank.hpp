#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pmiris/convolve.hpp"
#include "pmiris/error.hpp"
#include "pmiris/image_io.hpp"

namespace pmiris {

// Gabor carrier along the rotated x axis under a Gaussian envelope, mean-
// corrected so constant input yields zero response.
inline Kernel2D gabor_kernel(int rows, int cols, double wavelength, double orientation,
                             double sigma, double aspect, double phase,
                             const std::string& label = "gabor") {
  if (rows < 1 || cols < 1 || rows % 2 == 0 || cols % 2 == 0)
    throw InvalidParam("gabor_kernel: dims must be odd and positive");
  if (!(wavelength > 0.0)) throw InvalidParam("gabor_kernel: wavelength must be > 0");
  if (!(sigma > 0.0)) throw InvalidParam("gabor_kernel: sigma must be > 0");
  const int cy = rows / 2, cx = cols / 2;
  const double ct = std::cos(orientation), st = std::sin(orientation);
  std::vector<double> w(std::size_t(rows) * cols);
  double sum = 0.0;
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) {
      const double rx = x - cx, ry = y - cy;
      const double xp = rx * ct + ry * st;
      const double yp = -rx * st + ry * ct;
      const double env = std::exp(-(xp * xp + aspect * aspect * yp * yp) / (2.0 * sigma * sigma));
      const double v = env * std::cos(2.0 * 3.14159265358979323846 * xp / wavelength + phase);
      w[std::size_t(y) * cols + x] = v;
      sum += v;
    }
  const double mean = sum / double(w.size());
  for (auto& v : w) v -= mean;
  return Kernel2D(rows, cols, std::move(w), Provenance::gabor, label);
}

struct FilterBank {
  std::vector<Kernel2D> kernels;
  std::string version = "1";

  void validate() const {
    if (kernels.empty()) throw InvalidParam("FilterBank: empty bank");
    for (const auto& k : kernels) k.validate();
    for (std::size_t i = 0; i < kernels.size(); ++i)
      for (std::size_t j = i + 1; j < kernels.size(); ++j)
        if (kernels[i].label == kernels[j].label)
          throw InvalidParam("FilterBank: duplicate label \"" + kernels[i].label + "\"");
  }

  int max_rows() const {
    int m = 0;
    for (const auto& k : kernels) m = std::max(m, k.rows);
    return m;
  }

  int index_of(const std::string& label) const {
    for (std::size_t i = 0; i < kernels.size(); ++i)
      if (kernels[i].label == label) return int(i);
    throw IndexOutOfRange("FilterBank: no kernel labeled \"" + label + "\"");
  }
};

// Six Gabors: sizes 9x15 / 9x27 / 9x51, even and odd phase each, horizontal
// orientation, wavelength and envelope tied to kernel width.
inline FilterBank default_bank() {
  FilterBank bank;
  for (int cols : {15, 27, 51}) {
    const double lambda = cols * 0.5;
    const double sigma = cols / 5.0;
    const std::string base = "gabor-9x" + std::to_string(cols);
    bank.kernels.push_back(gabor_kernel(9, cols, lambda, 0.0, sigma, 1.0, 0.0, base + "-even"));
    bank.kernels.push_back(
        gabor_kernel(9, cols, lambda, 0.0, sigma, 1.0, 1.57079632679489661923, base + "-odd"));
  }
  bank.validate();
  return bank;
}

inline nlohmann::ordered_json bank_to_json(const FilterBank& bank) {
  bank.validate();
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& k : bank.kernels) {
    nlohmann::ordered_json jk;
    jk["label"] = k.label;
    jk["provenance"] = to_string(k.provenance);
    jk["rows"] = k.rows;
    jk["cols"] = k.cols;
    jk["weights"] = k.weights;
    arr.push_back(std::move(jk));
  }
  return arr;
}

inline FilterBank bank_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw ParseError("filter bank JSON must be an array");
  FilterBank bank;
  for (const auto& jk : arr) {
    try {
      bank.kernels.emplace_back(jk.at("rows").get<int>(), jk.at("cols").get<int>(),
                                jk.at("weights").get<std::vector<double>>(),
                                provenance_from_string(jk.at("provenance").get<std::string>()),
                                jk.at("label").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("filter bank JSON: ") + e.what());
    }
  }
  bank.validate();
  return bank;
}

inline void save_bank(const std::string& path, const FilterBank& bank) {
  atomic_write_text(path, bank_to_json(bank).dump(2) + "\n");
}

inline FilterBank load_bank(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("filter bank " + path + ": " + e.what());
  }
  return bank_from_json(j);
}

}  // namespace pmiris
