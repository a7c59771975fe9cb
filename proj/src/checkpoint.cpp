#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "audiodiff/errors.hpp"
#include "audiodiff/harness.hpp"

namespace audiodiff::harness {

using json = nlohmann::ordered_json;

namespace {
constexpr char kMagic[8] = {'A', 'D', 'C', 'K', 'P', 'T', '0', '1'};
}

void save_checkpoint(const std::string& path, const grad::ParamStore<float>& params,
                     const CheckpointHeader& header) {
  json h;
  h["config_hash"] = header.config_hash;
  h["mode"] = header.mode;
  h["step"] = header.step;
  h["best_epoch"] = header.best_epoch;
  h["valid_loss"] = header.valid_loss;
  h["vocab"] = header.vocab;
  json shapes = json::array();
  size_t payload_count = 0;
  for (int i = 0; i < params.size(); ++i) {
    json s;
    s["name"] = params.name(i);
    s["rows"] = params.value(i).rows;
    s["cols"] = params.value(i).cols;
    shapes.push_back(std::move(s));
    payload_count += params.value(i).size();
  }
  h["shapes"] = std::move(shapes);
  const std::string header_bytes = h.dump();

  // atomic write: temp file then rename
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + tmp);
    f.write(kMagic, sizeof(kMagic));
    const uint64_t len = header_bytes.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
    for (int i = 0; i < params.size(); ++i) {
      const auto& m = params.value(i);
      f.write(reinterpret_cast<const char*>(m.v.data()),
              static_cast<std::streamsize>(m.size() * sizeof(float)));
    }
    if (!f) throw IoError("short write: " + tmp);
  }
  (void)payload_count;
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("not a checkpoint file: " + path);
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  std::string header_bytes(len, '\0');
  f.read(header_bytes.data(), static_cast<std::streamsize>(len));
  if (!f) throw IoError("truncated checkpoint header: " + path);

  json h;
  try {
    h = json::parse(header_bytes);
  } catch (const std::exception& e) {
    throw IoError("corrupt checkpoint header: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  ckpt.header.config_hash = h.at("config_hash").get<std::string>();
  ckpt.header.mode = h.at("mode").get<std::string>();
  ckpt.header.step = h.at("step").get<int64_t>();
  ckpt.header.best_epoch = h.at("best_epoch").get<int>();
  ckpt.header.valid_loss = h.at("valid_loss").get<double>();
  ckpt.header.vocab = h.at("vocab").get<std::vector<std::string>>();
  for (const auto& s : h.at("shapes")) {
    CheckpointHeader::Shape shape;
    shape.name = s.at("name").get<std::string>();
    shape.rows = s.at("rows").get<int>();
    shape.cols = s.at("cols").get<int>();
    if (shape.rows <= 0 || shape.cols <= 0) throw IoError("checkpoint: bad shape for " + shape.name);
    ckpt.header.shapes.push_back(shape);

    grad::Mat<float> m(shape.rows, shape.cols);
    f.read(reinterpret_cast<char*>(m.v.data()),
           static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!f) throw IoError("checkpoint payload shorter than declared shapes: " + path);
    ckpt.params.add(shape.name, std::move(m));
  }
  // payload must end exactly where the shapes say it does
  char extra;
  f.read(&extra, 1);
  if (!f.eof()) throw IoError("checkpoint payload longer than declared shapes: " + path);
  return ckpt;
}

}  // namespace audiodiff::harness
