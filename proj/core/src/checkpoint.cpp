#include <bit>
#include <cstring>
#include <fstream>

#include "json_util.hpp"
#include "vrfm/training.hpp"

namespace vrfm {

namespace {

constexpr char kMagic[8] = {'V', 'R', 'F', 'M', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated checkpoint");
  return v;
}

std::string read_bytes(std::istream& is, std::size_t n) {
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError("truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  Json meta;
  meta["format_version"] = ckpt.format_version;
  meta["objective"] = ckpt.objective;
  meta["task"] = ckpt.task;
  meta["model"] = velocity_config_to_json(ckpt.model_cfg);
  if (ckpt.posterior_cfg)
    meta["posterior"] = posterior_config_to_json(*ckpt.posterior_cfg);
  meta["source"] = distribution_to_json(ckpt.source);
  meta["target"] = distribution_to_json(ckpt.target);
  meta["train"] = train_config_to_json(ckpt.train_cfg);
  meta["final_losses"] = losses_to_json(ckpt.final_losses);
  meta["seed"] = ckpt.seed;
  const std::string meta_str = meta.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, ckpt.format_version);
  write_pod<std::uint64_t>(os, meta_str.size());
  os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const Parameter& p : ckpt.params) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod<std::uint32_t>(os, 2u);
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(p.values.rows()));
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(p.values.cols()));
    for (Index r = 0; r < p.values.rows(); ++r)
      for (Index c = 0; c < p.values.cols(); ++c) write_pod<double>(os, p.values(r, c));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);

  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint (bad magic): " + path);

  Checkpoint ckpt;
  ckpt.format_version = read_pod<std::uint32_t>(is);
  if (ckpt.format_version != 1)
    throw IoError("unsupported checkpoint version " + std::to_string(ckpt.format_version));

  const auto meta_len = read_pod<std::uint64_t>(is);
  const std::string meta_str = read_bytes(is, meta_len);
  Json meta;
  try {
    meta = Json::parse(meta_str);
  } catch (const Json::exception& e) {
    throw IoError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  ckpt.objective = meta.at("objective").get<std::string>();
  ckpt.task = meta.value("task", std::string{});
  ckpt.model_cfg = velocity_config_from_json(meta.at("model"), "model");
  if (meta.contains("posterior"))
    ckpt.posterior_cfg = posterior_config_from_json(meta.at("posterior"), "posterior");
  ckpt.source = distribution_from_json(meta.at("source"), "source");
  ckpt.target = distribution_from_json(meta.at("target"), "target");
  ckpt.train_cfg = train_config_from_json(meta.at("train"), "train");
  ckpt.final_losses = losses_from_json(meta.at("final_losses"));
  ckpt.seed = meta.at("seed").get<std::uint64_t>();

  const auto n_params = read_pod<std::uint32_t>(is);
  ckpt.params.reserve(n_params);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    Parameter p;
    const auto name_len = read_pod<std::uint32_t>(is);
    p.name = read_bytes(is, name_len);
    const auto rank = read_pod<std::uint32_t>(is);
    if (rank != 2) throw IoError("unsupported parameter rank in checkpoint");
    const auto rows = read_pod<std::uint64_t>(is);
    const auto cols = read_pod<std::uint64_t>(is);
    p.values.resize(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < p.values.rows(); ++r)
      for (Index c = 0; c < p.values.cols(); ++c) p.values(r, c) = read_pod<double>(is);
    ckpt.params.push_back(std::move(p));
  }
  return ckpt;
}

}  // namespace vrfm
