#include <gtest/gtest.h>

#include <cmath>

#include "oddmap/error.hpp"
#include "oddmap/infer.hpp"
#include "onnx_builder.hpp"
#include "support.hpp"

using namespace oddmap;

namespace {

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

ErrorKind inspect_error(const std::string& bytes, std::string* message = nullptr) {
  try {
    inspect_model(as_bytes(bytes));
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  ADD_FAILURE() << "model accepted";
  return ErrorKind::Config;
}

TileTensor solid(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  TileTensor t;
  t.data.resize(kTensorSize * kTensorSize * 3);
  for (std::size_t i = 0; i < t.data.size(); i += 3) {
    t.data[i] = r;
    t.data[i + 1] = g;
    t.data[i + 2] = b;
  }
  return t;
}

double expected_waste(double gain, std::uint8_t r, std::uint8_t g) {
  const double z = gain * (r / 255.0 - g / 255.0);
  return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace

TEST(InspectModel, ReadsContractMetadata) {
  test::TinyModel m;
  m.metadata["input_scale"] = "0.00392156862745098";
  const auto info = inspect_model(as_bytes(test::build_model(m)));
  EXPECT_EQ(info.class_names, (std::vector<std::string>{"background", "waste"}));
  EXPECT_EQ(info.layout, InputLayout::Nchw);
  EXPECT_EQ(info.input_shape, (std::vector<std::int64_t>{-1, 3, 128, 128}));
  EXPECT_EQ(info.output_shape, (std::vector<std::int64_t>{-1, 2}));
  EXPECT_EQ(info.input_name, "image");
  EXPECT_EQ(info.output_name, "scores");
  EXPECT_TRUE(info.outputs_probabilities);
  EXPECT_NEAR(info.input_scale, 1.0 / 255.0, 1e-15);
}

TEST(InspectModel, CommaSeparatedClassNames) {
  test::TinyModel m;
  m.metadata["class_names"] = "background,waste";
  EXPECT_NO_THROW(inspect_model(as_bytes(test::build_model(m))));
}

TEST(InspectModel, ReversedClassNamesRejected) {
  test::TinyModel m;
  m.metadata["class_names"] = R"(["waste","background"])";
  std::string msg;
  EXPECT_EQ(inspect_error(test::build_model(m), &msg), ErrorKind::Contract);
  EXPECT_NE(msg.find("expected"), std::string::npos);
  EXPECT_NE(msg.find("found"), std::string::npos);
}

TEST(InspectModel, MissingMetadataRejected) {
  test::TinyModel m;
  m.metadata.clear();
  EXPECT_EQ(inspect_error(test::build_model(m)), ErrorKind::Contract);
  test::TinyModel n;
  n.set_layout = false;
  EXPECT_EQ(inspect_error(test::build_model(n)), ErrorKind::Contract);
}

TEST(InspectModel, ShapeMismatchesRejected) {
  test::TinyModel wrong_in;
  wrong_in.input_dims = {-1, 3, 224, 224};
  std::string msg;
  EXPECT_EQ(inspect_error(test::build_model(wrong_in), &msg), ErrorKind::Contract);
  EXPECT_NE(msg.find("expected input shape"), std::string::npos) << msg;
  test::TinyModel wrong_out;
  wrong_out.output_dims = {-1, 3};
  EXPECT_EQ(inspect_error(test::build_model(wrong_out)), ErrorKind::Contract);
  test::TinyModel layout_mismatch;
  layout_mismatch.input_dims = {-1, 128, 128, 3};
  EXPECT_EQ(inspect_error(test::build_model(layout_mismatch)), ErrorKind::Contract);
}

TEST(InspectModel, TruncatedAndGarbageBytesAreParseErrors) {
  const auto good = test::build_model({});
  for (std::size_t cut : {good.size() - 1, good.size() / 2, std::size_t{3}}) {
    EXPECT_EQ(inspect_error(good.substr(0, cut)), ErrorKind::Parse) << cut;
  }
  EXPECT_EQ(inspect_error(std::string("\x0f\xff\xff", 3)), ErrorKind::Parse);
}

TEST(LoadModel, NchwProbabilitiesMatchClosedForm) {
  test::TempDir dir;
  test::write_text(dir / "m.onnx", test::build_model({}));
  const auto backend = load_model(dir / "m.onnx");
  EXPECT_EQ(backend->name(), "onnx");
  const std::vector<TileTensor> batch = {solid(235, 25, 30), solid(90, 120, 60), solid(0, 0, 0)};
  const auto probs = backend->classify(batch);
  ASSERT_EQ(probs.size(), 3u);
  // float32 pooling over 16384 pixels
  EXPECT_NEAR(probs[0].waste, expected_waste(4, 235, 25), 2e-4);
  EXPECT_NEAR(probs[1].waste, expected_waste(4, 90, 120), 2e-4);
  EXPECT_NEAR(probs[2].waste, 0.5, 1e-6);
  for (const auto& p : probs) EXPECT_NEAR(p.waste + p.background, 1.0, 1e-12);
}

TEST(LoadModel, NhwcLogitsAgreeWithNchwProbabilities) {
  test::TempDir dir;
  test::TinyModel a;
  test::TinyModel b;
  b.nhwc = true;
  b.logits = true;
  test::write_text(dir / "a.onnx", test::build_model(a));
  test::write_text(dir / "b.onnx", test::build_model(b));
  const auto ma = load_model(dir / "a.onnx");
  const auto mb = load_model(dir / "b.onnx");
  std::vector<TileTensor> batch;
  for (int i = 0; i < 50; ++i) {
    TileTensor t;
    t.data = test::noise(kTensorSize * kTensorSize * 3, static_cast<std::uint32_t>(i));
    batch.push_back(std::move(t));
  }
  const auto pa = ma->classify(batch);
  const auto pb = mb->classify(batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_NEAR(pa[i].waste, pb[i].waste, 1e-4);
    EXPECT_EQ(pa[i].waste > 0.5, pb[i].waste > 0.5);
  }
}

TEST(LoadModel, MissingFileIsIoError) {
  try {
    load_model("/nonexistent/model.onnx");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}

TEST(LoadModel, WrongTensorSizeIsContractError) {
  test::TempDir dir;
  test::write_text(dir / "m.onnx", test::build_model({}));
  const auto backend = load_model(dir / "m.onnx");
  TileTensor t;
  t.size = 64;
  t.data.resize(64 * 64 * 3);
  try {
    backend->classify(std::vector<TileTensor>{t});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Contract);
  }
}
