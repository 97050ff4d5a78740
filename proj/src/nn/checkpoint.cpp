#include "reg23/nn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "reg23/errors.hpp"

namespace reg23::nn {

namespace {

std::string payload_path(const std::string& header_path) {
  const auto dot = header_path.find_last_of('.');
  const std::string stem =
      dot == std::string::npos ? header_path : header_path.substr(0, dot);
  return stem + ".nnp";
}

void append_f32(std::ofstream& os, const Tensor& t) {
  std::vector<float> buf(t.numel());
  for (size_t i = 0; i < t.numel(); ++i) buf[i] = (float)t.data[i];
  os.write(reinterpret_cast<const char*>(buf.data()),
           (std::streamsize)(buf.size() * sizeof(float)));
}

void read_f32(std::ifstream& is, Tensor& t) {
  std::vector<float> buf(t.numel());
  is.read(reinterpret_cast<char*>(buf.data()),
          (std::streamsize)(buf.size() * sizeof(float)));
  if (!is) throw IoError("checkpoint payload truncated");
  for (size_t i = 0; i < t.numel(); ++i) t.data[i] = buf[i];
}

void write_entry(std::ofstream& os, const char* tag, const std::string& name,
                 const Tensor& t) {
  os << tag << " " << name << " " << t.rank();
  for (int d : t.shape) os << " " << d;
  os << "\n";
}

struct Entry {
  std::string tag, name;
  std::vector<int> shape;
};

}  // namespace

void save_checkpoint(const std::string& header_path,
                     const std::map<std::string, std::string>& config,
                     const std::vector<Param*>& params,
                     const std::vector<std::pair<std::string, Tensor*>>& buffers) {
  std::ofstream hs(header_path);
  if (!hs) throw IoError("cannot open for writing: " + header_path);
  for (const auto& [k, v] : config) hs << "config " << k << " " << v << "\n";
  for (const Param* p : params) write_entry(hs, "param", p->name, p->value);
  for (const auto& [name, t] : buffers) write_entry(hs, "buffer", name, *t);
  if (!hs) throw IoError("write failed: " + header_path);

  std::ofstream os(payload_path(header_path), std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + payload_path(header_path));
  for (const Param* p : params) append_f32(os, p->value);
  for (const auto& [name, t] : buffers) append_f32(os, *t);
  if (!os) throw IoError("write failed: " + payload_path(header_path));
}

std::map<std::string, std::string> load_checkpoint(
    const std::string& header_path, const std::vector<Param*>& params,
    const std::vector<std::pair<std::string, Tensor*>>& buffers) {
  std::ifstream hs(header_path);
  if (!hs) throw IoError("cannot open: " + header_path);
  std::map<std::string, std::string> config;
  std::vector<Entry> entries;
  std::string line;
  while (std::getline(hs, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "config") {
      std::string k, v;
      ss >> k;
      std::getline(ss, v);
      if (!v.empty() && v[0] == ' ') v.erase(0, 1);
      config[k] = v;
    } else if (tag == "param" || tag == "buffer") {
      Entry e;
      e.tag = tag;
      int rank = 0;
      ss >> e.name >> rank;
      e.shape.resize((size_t)rank);
      for (int& d : e.shape) ss >> d;
      if (!ss) throw MalformedHeader("bad checkpoint entry: " + line);
      entries.push_back(std::move(e));
    } else {
      throw MalformedHeader("unrecognized checkpoint line: " + line);
    }
  }

  const size_t expected = params.size() + buffers.size();
  if (entries.size() != expected)
    throw SizeMismatch("checkpoint lists " + std::to_string(entries.size()) +
                       " tensors, net has " + std::to_string(expected));

  std::ifstream is(payload_path(header_path), std::ios::binary);
  if (!is) throw IoError("cannot open: " + payload_path(header_path));
  size_t pi = 0, bi = 0;
  for (const Entry& e : entries) {
    Tensor* dst = nullptr;
    std::string want;
    if (e.tag == "param") {
      if (pi >= params.size()) throw SizeMismatch("too many params in checkpoint");
      dst = &params[pi]->value;
      want = params[pi]->name;
      ++pi;
    } else {
      if (bi >= buffers.size()) throw SizeMismatch("too many buffers in checkpoint");
      dst = buffers[bi].second;
      want = buffers[bi].first;
      ++bi;
    }
    if (e.name != want)
      throw MalformedHeader("checkpoint tensor " + e.name + ", expected " + want);
    if (e.shape != dst->shape)
      throw SizeMismatch("shape mismatch for " + e.name);
    read_f32(is, *dst);
  }
  return config;
}

std::map<std::string, std::string> read_checkpoint_config(
    const std::string& header_path) {
  std::ifstream hs(header_path);
  if (!hs) throw IoError("cannot open: " + header_path);
  std::map<std::string, std::string> config;
  std::string line;
  while (std::getline(hs, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag != "config") continue;
    std::string k, v;
    ss >> k;
    std::getline(ss, v);
    if (!v.empty() && v[0] == ' ') v.erase(0, 1);
    config[k] = v;
  }
  return config;
}

}  // namespace reg23::nn
