#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cepn/data.hpp"
#include "cepn/error.hpp"
#include "cepn/serialize.hpp"
#include "cepn/tensor.hpp"

namespace cepn {

inline constexpr char kVolumeMagic[4] = {'C', 'E', 'C', 'T'};
inline constexpr std::uint32_t kVolumeVersion = 1;

inline void write_volume(const Tensor& vol, const std::string& path) {
  if (vol.ndim() != 5) throw shape_error("write_volume: need 5-d tensor, got " + vol.shape_str());
  std::string buf;
  buf.reserve(4 + 4 + 20 + vol.size() * 8);
  buf.append(kVolumeMagic, 4);
  detail::put_u32_le(buf, kVolumeVersion);
  for (std::size_t k = 0; k < 5; ++k)
    detail::put_u32_le(buf, static_cast<std::uint32_t>(vol.shape()[k]));
  for (std::size_t i = 0; i < vol.size(); ++i) detail::put_f64_le(buf, vol[i]);
  detail::write_file_bytes(path, buf);
}

inline Tensor read_volume(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes, path);
  const std::string magic = r.raw(4, "magic");
  if (std::memcmp(magic.data(), kVolumeMagic, 4) != 0)
    throw data_error(path + ": bad magic at offset 0 (expected CECT)");
  const std::uint32_t version = r.u32("version");
  if (version != kVolumeVersion)
    throw data_error(path + ": unsupported version " + std::to_string(version) +
                     " at offset 4");
  std::vector<std::size_t> shape(5);
  std::size_t total = 1;
  for (int k = 0; k < 5; ++k) {
    shape[k] = r.u32("dims");
    if (shape[k] == 0 || shape[k] > (1u << 20))
      throw data_error(path + ": implausible dimension " + std::to_string(shape[k]) +
                       " at offset " + std::to_string(r.offset() - 4));
    total *= shape[k];
  }
  std::vector<double> data(total);
  for (std::size_t i = 0; i < total; ++i) data[i] = r.f64("voxel data");
  return Tensor(shape, std::move(data));
}

inline void write_dataset(const Cohort& cohort, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.csv", std::ios::trunc);
  if (!manifest) throw data_error(dir + "/manifest.csv: cannot open for writing");
  manifest << "patient_id,time,event,margin,file\n";
  for (const auto& p : cohort) {
    const std::string file = p.id + ".cect";
    write_volume(p.volume, dir + "/" + file);
    manifest << p.id << ',' << detail::fmt_double(p.survival.time) << ',' << p.survival.event
             << ',' << p.margin << ',' << file << '\n';
  }
  if (!manifest) throw data_error(dir + "/manifest.csv: write failed");
}

inline Cohort read_dataset(const std::string& dir) {
  const std::string mpath = dir + "/manifest.csv";
  std::ifstream in(mpath);
  if (!in) throw data_error(mpath + ": cannot open for reading");
  std::string line;
  if (!std::getline(in, line) || line != "patient_id,time,event,margin,file")
    throw data_error(mpath + ": bad or missing header row");
  Cohort cohort;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5)
      throw data_error(mpath + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " fields, expected 5");
    Patient p;
    p.id = cells[0];
    try {
      p.survival.time = std::stod(cells[1]);
      p.survival.event = std::stoi(cells[2]);
      p.margin = std::stoi(cells[3]);
    } catch (const std::exception&) {
      throw data_error(mpath + ": row " + std::to_string(row) + " has unparseable numbers");
    }
    if (p.survival.event != 0 && p.survival.event != 1)
      throw data_error(mpath + ": row " + std::to_string(row) + " event must be 0 or 1");
    p.volume = read_volume(dir + "/" + cells[4]);
    cohort.push_back(std::move(p));
  }
  return cohort;
}

}  // namespace cepn
