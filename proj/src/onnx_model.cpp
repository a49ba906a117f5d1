#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string_view>

#include "json.hpp"
#include "oddmap/error.hpp"
#include "oddmap/infer.hpp"

namespace oddmap {
namespace {

// Minimal protobuf wire-format reader, enough to walk ModelProto metadata
// and the graph's input/output value infos.
class Wire {
 public:
  explicit Wire(std::span<const std::uint8_t> bytes) : p_(bytes.data()), end_(bytes.data() + bytes.size()) {}

  bool done() const { return p_ >= end_; }

  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      if (p_ >= end_) fail(ErrorKind::Parse, "model file truncated inside a varint");
      const std::uint8_t b = *p_++;
      v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
      if (!(b & 0x80)) return v;
    }
    fail(ErrorKind::Parse, "malformed varint in model file");
  }

  struct Field {
    std::uint32_t number = 0;
    std::uint32_t wire = 0;
    std::uint64_t value = 0;
    std::span<const std::uint8_t> bytes;
  };

  Field next() {
    Field f;
    const std::uint64_t key = varint();
    f.number = static_cast<std::uint32_t>(key >> 3);
    f.wire = static_cast<std::uint32_t>(key & 7);
    if (f.number == 0) fail(ErrorKind::Parse, "invalid field number 0 in model file");
    switch (f.wire) {
      case 0: f.value = varint(); break;
      case 1: skip(8); break;
      case 5: skip(4); break;
      case 2: {
        const std::uint64_t len = varint();
        if (len > static_cast<std::uint64_t>(end_ - p_)) fail(ErrorKind::Parse, "model file truncated");
        f.bytes = {p_, static_cast<std::size_t>(len)};
        p_ += len;
        break;
      }
      default: fail(ErrorKind::Parse, "unsupported wire type " + std::to_string(f.wire) + " in model file");
    }
    return f;
  }

 private:
  void skip(std::size_t n) {
    if (static_cast<std::size_t>(end_ - p_) < n) fail(ErrorKind::Parse, "model file truncated");
    p_ += n;
  }

  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

std::string as_string(std::span<const std::uint8_t> b) { return {reinterpret_cast<const char*>(b.data()), b.size()}; }

struct ValueInfo {
  std::string name;
  std::vector<std::int64_t> shape;
};

ValueInfo parse_value_info(std::span<const std::uint8_t> bytes) {
  ValueInfo info;
  Wire w(bytes);
  while (!w.done()) {
    const auto f = w.next();
    if (f.number == 1 && f.wire == 2) info.name = as_string(f.bytes);
    if (f.number != 2 || f.wire != 2) continue;
    Wire type(f.bytes);
    while (!type.done()) {
      const auto t = type.next();
      if (t.number != 1 || t.wire != 2) continue;
      Wire tensor(t.bytes);
      while (!tensor.done()) {
        const auto s = tensor.next();
        if (s.number != 2 || s.wire != 2) continue;
        Wire shape(s.bytes);
        while (!shape.done()) {
          const auto d = shape.next();
          if (d.number != 1 || d.wire != 2) continue;
          std::int64_t dim = -1;
          Wire dw(d.bytes);
          while (!dw.done()) {
            const auto v = dw.next();
            if (v.number == 1 && v.wire == 0) dim = static_cast<std::int64_t>(v.value);
          }
          info.shape.push_back(dim);
        }
      }
    }
  }
  return info;
}

std::string shape_text(const std::vector<std::int64_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    s += (i ? "," : "") + (shape[i] < 0 ? std::string("N") : std::to_string(shape[i]));
  }
  return s + ")";
}

std::vector<std::string> parse_class_names(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    return j.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
  }
  std::vector<std::string> names;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    std::string part = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    part.erase(0, part.find_first_not_of(" \t"));
    part.erase(part.find_last_not_of(" \t") + 1);
    names.push_back(part);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return names;
}

bool dim_matches(std::int64_t found, std::int64_t expected) { return found == expected; }

class OnnxClassifier final : public ClassifierBackend {
 public:
  OnnxClassifier(cv::dnn::Net net, ModelInfo info) : net_(std::move(net)), info_(std::move(info)) {}

  std::vector<ClassProbabilities> classify(std::span<const TileTensor> batch) override {
    if (batch.empty()) return {};
    const int n = static_cast<int>(batch.size());
    const int size = kTensorSize;
    const auto scale = static_cast<float>(info_.input_scale);
    cv::Mat blob;
    if (info_.layout == InputLayout::Nchw) {
      const int dims[4] = {n, kTensorChannels, size, size};
      blob.create(4, dims, CV_32F);
      auto* out = blob.ptr<float>();
      const std::size_t plane = static_cast<std::size_t>(size) * size;
      for (int b = 0; b < n; ++b) {
        check(batch[b]);
        const auto& data = batch[b].data;
        float* dst = out + static_cast<std::size_t>(b) * kTensorChannels * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          for (int c = 0; c < kTensorChannels; ++c) dst[c * plane + p] = data[p * kTensorChannels + c] * scale;
        }
      }
    } else {
      const int dims[4] = {n, size, size, kTensorChannels};
      blob.create(4, dims, CV_32F);
      auto* out = blob.ptr<float>();
      const std::size_t per = static_cast<std::size_t>(size) * size * kTensorChannels;
      for (int b = 0; b < n; ++b) {
        check(batch[b]);
        for (std::size_t i = 0; i < per; ++i) out[b * per + i] = batch[b].data[i] * scale;
      }
    }

    cv::Mat result;
    {
      std::lock_guard lock(mutex_);
      try {
        net_.setInput(blob, info_.input_name);
        result = net_.forward(info_.output_name).clone();
      } catch (const cv::Exception& e) {
        fail(ErrorKind::Backend, std::string("model execution failed: ") + e.what());
      }
    }
    result = result.reshape(1, static_cast<int>(result.total() / 2));
    if (result.rows != n || result.cols != 2) {
      fail(ErrorKind::Backend, "model produced " + std::to_string(result.total()) + " values for " +
                                   std::to_string(n) + " tiles");
    }
    std::vector<ClassProbabilities> out;
    out.reserve(batch.size());
    for (int b = 0; b < n; ++b) {
      double p0 = result.at<float>(b, 0);
      double p1 = result.at<float>(b, 1);
      if (!info_.outputs_probabilities) {
        const double m = std::max(p0, p1);
        p0 = std::exp(p0 - m);
        p1 = std::exp(p1 - m);
      }
      const double sum = p0 + p1;
      if (!(sum > 0.0) || !std::isfinite(sum)) fail(ErrorKind::Backend, "model produced non-finite scores");
      out.push_back({p0 / sum, p1 / sum});
    }
    return out;
  }

  std::string name() const override { return "onnx"; }

 private:
  static void check(const TileTensor& t) {
    if (t.size != kTensorSize || t.data.size() != static_cast<std::size_t>(kTensorSize) * kTensorSize * kTensorChannels) {
      fail(ErrorKind::Contract, "model expects 128x128x3 tensors, got size " + std::to_string(t.size));
    }
  }

  std::mutex mutex_;
  cv::dnn::Net net_;
  ModelInfo info_;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open model " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

ModelInfo inspect_model(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) fail(ErrorKind::Parse, "model file is empty");
  std::map<std::string, std::string> meta;
  std::span<const std::uint8_t> graph;
  Wire model(bytes);
  while (!model.done()) {
    const auto f = model.next();
    if (f.number == 7 && f.wire == 2) graph = f.bytes;
    if (f.number == 14 && f.wire == 2) {
      std::string key, value;
      Wire entry(f.bytes);
      while (!entry.done()) {
        const auto e = entry.next();
        if (e.number == 1 && e.wire == 2) key = as_string(e.bytes);
        if (e.number == 2 && e.wire == 2) value = as_string(e.bytes);
      }
      meta[key] = value;
    }
  }
  if (graph.empty()) fail(ErrorKind::Parse, "model has no graph");

  std::vector<ValueInfo> inputs, outputs;
  std::set<std::string> initializers;
  Wire g(graph);
  while (!g.done()) {
    const auto f = g.next();
    if (f.wire != 2) continue;
    if (f.number == 11) inputs.push_back(parse_value_info(f.bytes));
    if (f.number == 12) outputs.push_back(parse_value_info(f.bytes));
    if (f.number == 5) {
      Wire t(f.bytes);
      while (!t.done()) {
        const auto tf = t.next();
        if (tf.number == 8 && tf.wire == 2) initializers.insert(as_string(tf.bytes));
      }
    }
  }
  std::erase_if(inputs, [&](const ValueInfo& v) { return initializers.contains(v.name); });
  if (inputs.size() != 1) fail(ErrorKind::Contract, "expected 1 graph input, found " + std::to_string(inputs.size()));
  if (outputs.size() != 1) fail(ErrorKind::Contract, "expected 1 graph output, found " + std::to_string(outputs.size()));

  ModelInfo info;
  info.input_name = inputs[0].name;
  info.output_name = outputs[0].name;
  info.input_shape = inputs[0].shape;
  info.output_shape = outputs[0].shape;

  const auto names = meta.find("class_names");
  if (names == meta.end()) fail(ErrorKind::Contract, "expected class_names metadata [background, waste], found none");
  info.class_names = parse_class_names(names->second);
  if (info.class_names != std::vector<std::string>{"background", "waste"}) {
    fail(ErrorKind::Contract, "expected class_names [background, waste], found " + names->second);
  }

  const auto layout = meta.find("input_layout");
  if (layout == meta.end()) fail(ErrorKind::Contract, "expected input_layout metadata (NCHW or NHWC), found none");
  std::string l = layout->second;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::toupper(c); });
  if (l == "NCHW") {
    info.layout = InputLayout::Nchw;
  } else if (l == "NHWC") {
    info.layout = InputLayout::Nhwc;
  } else {
    fail(ErrorKind::Contract, "expected input_layout NCHW or NHWC, found " + layout->second);
  }

  const std::vector<std::int64_t> expected_in =
      info.layout == InputLayout::Nchw ? std::vector<std::int64_t>{-1, 3, kTensorSize, kTensorSize}
                                       : std::vector<std::int64_t>{-1, kTensorSize, kTensorSize, 3};
  bool in_ok = info.input_shape.size() == 4;
  for (std::size_t i = 1; in_ok && i < 4; ++i) in_ok = dim_matches(info.input_shape[i], expected_in[i]);
  if (!in_ok) {
    fail(ErrorKind::Contract, "expected input shape " + shape_text(expected_in) + ", found " + shape_text(info.input_shape));
  }
  if (info.output_shape.size() != 2 || info.output_shape[1] != 2) {
    fail(ErrorKind::Contract, "expected output shape (N,2), found " + shape_text(info.output_shape));
  }

  if (const auto s = meta.find("input_scale"); s != meta.end()) {
    try {
      info.input_scale = std::stod(s->second);
    } catch (const std::exception&) {
      fail(ErrorKind::Contract, "input_scale metadata is not a number: " + s->second);
    }
  }
  if (const auto o = meta.find("output_kind"); o != meta.end()) {
    if (o->second == "logits") {
      info.outputs_probabilities = false;
    } else if (o->second != "probabilities") {
      fail(ErrorKind::Contract, "expected output_kind probabilities or logits, found " + o->second);
    }
  }
  return info;
}

ModelInfo inspect_model_file(const std::filesystem::path& path) { return inspect_model(read_bytes(path)); }

std::unique_ptr<ClassifierBackend> load_model(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  ModelInfo info = inspect_model(bytes);
  cv::dnn::Net net;
  try {
    std::vector<uchar> buffer(bytes.begin(), bytes.end());
    net = cv::dnn::readNetFromONNX(buffer);
  } catch (const cv::Exception& e) {
    fail(ErrorKind::Backend, "cannot load model " + path.string() + ": " + e.what());
  }
  if (net.empty()) fail(ErrorKind::Backend, "cannot load model " + path.string());
  net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
  net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
  return std::make_unique<OnnxClassifier>(std::move(net), std::move(info));
}

}  // namespace oddmap
