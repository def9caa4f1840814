#include "chatcap/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "chatcap/error.hpp"

namespace chatcap {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'H', 'A', 'T', 'C', 'A', 'P', 'S'};

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

void put_doubles(std::string& out, std::span<const double> values) {
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
}

class Reader {
 public:
  Reader(const std::string& buffer, std::size_t end, std::string source)
      : buffer_(buffer), end_(end), source_(std::move(source)) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  std::string get_string(std::size_t n) { return std::string(take(n), n); }
  void get_doubles(std::span<double> out) {
    std::memcpy(out.data(), take(out.size() * sizeof(double)), out.size() * sizeof(double));
  }
  std::size_t position() const { return pos_; }

 private:
  const char* take(std::size_t n) {
    if (n > end_ - pos_) throw FormatError(source_ + ": checkpoint is truncated");
    const char* p = buffer_.data() + pos_;
    pos_ += n;
    return p;
  }

  const std::string& buffer_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string source_;
};

std::uint32_t crc_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // crc32 takes a uInt length; feed large buffers in chunks.
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string code_version() { return CHATCAP_VERSION; }

void save_checkpoint(const std::filesystem::path& path, const DialogModel& model, const Vocab& vocab,
                     const TrainingPosition& position, const AdamState* adam, const json& run_config) {
  if (vocab.size() != model.config().vocab_size) {
    throw ContractError("vocabulary size " + std::to_string(vocab.size()) + " differs from model vocab_size " +
                        std::to_string(model.config().vocab_size));
  }
  const auto& entries = model.params().entries();
  json params = json::array();
  for (const auto& e : entries) params.push_back({{"name", e.name}, {"group", e.group}, {"shape", e.tensor.shape()}});

  json header{{"config", model.config().to_json()},
              {"vocab", vocab.tokens()},
              {"code_version", code_version()},
              {"training",
               {{"step", position.step},
                {"epoch", position.epoch},
                {"seed", position.seed},
                {"best_metric", position.best_metric},
                {"best_step", position.best_step}}},
              {"run_config", run_config},
              {"params", params},
              {"optimizer", nullptr}};
  if (adam != nullptr) {
    header["optimizer"] = {{"beta1", adam->beta1},
                           {"beta2", adam->beta2},
                           {"epsilon", adam->epsilon},
                           {"step", adam->step},
                           {"has_moments", json::array()}};
    for (const auto& e : entries) header["optimizer"]["has_moments"].push_back(adam->moments.contains(e.name));
  }
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  for (const auto& e : entries) put_doubles(out, e.tensor.data());
  if (adam != nullptr) {
    for (const auto& e : entries) {
      auto it = adam->moments.find(e.name);
      if (it == adam->moments.end()) continue;
      if (it->second.first.size() != e.tensor.numel() || it->second.second.size() != e.tensor.numel()) {
        throw ContractError("Adam moments for '" + e.name + "' do not match the parameter size");
      }
      put_doubles(out, it->second.first);
      put_doubles(out, it->second.second);
    }
  }
  put<std::uint32_t>(out, crc_of(out.data(), out.size()));

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointContents load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  const std::string buffer((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string source = path.string();
  if (buffer.size() < sizeof(kMagic) + 4 + 8 + 4) throw FormatError(source + ": checkpoint is truncated");
  if (std::memcmp(buffer.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError(source + ": not a checkpoint file");

  const std::size_t body = buffer.size() - 4;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buffer.data() + body, 4);
  if (stored_crc != crc_of(buffer.data(), body)) throw FormatError(source + ": checksum mismatch");

  Reader in(buffer, body, source);
  in.get_string(sizeof(kMagic));
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = in.get<std::uint64_t>();
  if (header_len > body) throw FormatError(source + ": checkpoint is truncated");
  json header;
  try {
    header = json::parse(in.get_string(static_cast<std::size_t>(header_len)));
  } catch (const json::exception& e) {
    throw FormatError(source + ": malformed checkpoint header: " + e.what());
  }

  CheckpointContents c;
  try {
    c.vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
    c.model = make_model(ModelConfig::from_json(header.at("config")));
    c.code_version = header.at("code_version").get<std::string>();
    const json& t = header.at("training");
    c.position.step = t.at("step").get<std::int64_t>();
    c.position.epoch = t.at("epoch").get<std::int64_t>();
    c.position.seed = t.at("seed").get<std::uint64_t>();
    c.position.best_metric = t.at("best_metric").get<double>();
    c.position.best_step = t.at("best_step").get<std::int64_t>();
    c.run_config = header.at("run_config");

    const json& params = header.at("params");
    const auto& entries = c.model->params().entries();
    if (params.size() != entries.size()) {
      throw FormatError(source + ": checkpoint holds " + std::to_string(params.size()) + " tensors, model expects " +
                        std::to_string(entries.size()));
    }
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (params[k].at("name").get<std::string>() != entries[k].name ||
          params[k].at("shape").get<Shape>() != entries[k].tensor.shape()) {
        throw FormatError(source + ": tensor " + std::to_string(k) + " is '" + params[k].at("name").get<std::string>() +
                          "', model expects '" + entries[k].name + "' " + shape_str(entries[k].tensor.shape()));
      }
    }
    for (const auto& e : entries) {
      Tensor t = e.tensor;
      in.get_doubles(t.mutable_data());
    }

    const json& opt = header.at("optimizer");
    if (!opt.is_null()) {
      AdamState adam;
      adam.beta1 = opt.at("beta1").get<double>();
      adam.beta2 = opt.at("beta2").get<double>();
      adam.epsilon = opt.at("epsilon").get<double>();
      adam.step = opt.at("step").get<std::int64_t>();
      const json& has = opt.at("has_moments");
      for (std::size_t k = 0; k < entries.size(); ++k) {
        if (!has.at(k).get<bool>()) continue;
        AdamMoments m;
        m.first.resize(entries[k].tensor.numel());
        m.second.resize(entries[k].tensor.numel());
        in.get_doubles(m.first);
        in.get_doubles(m.second);
        adam.moments.emplace(entries[k].name, std::move(m));
      }
      c.adam = std::move(adam);
    }
  } catch (const json::exception& e) {
    throw FormatError(source + ": malformed checkpoint header: " + e.what());
  } catch (const ContractError& e) {
    throw FormatError(source + ": invalid checkpoint contents: " + e.what());
  }
  if (in.position() != body) throw FormatError(source + ": trailing bytes after checkpoint payload");
  return c;
}

}  // namespace chatcap
