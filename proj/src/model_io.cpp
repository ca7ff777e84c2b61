#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "evpose/body_model.hpp"
#include "evpose/error.hpp"

namespace evpose {

namespace {

using nlohmann::json;

template <typename Derived>
void append_f32(std::vector<char>& blob, const Eigen::DenseBase<Derived>& m) {
  // Row-major traversal regardless of the source storage order.
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float v = static_cast<float>(m(r, c));
      const char* p = reinterpret_cast<const char*>(&v);
      blob.insert(blob.end(), p, p + sizeof(float));
    }
}

[[noreturn]] void schema(const std::string& what) { throw Error(Errc::SchemaViolation, what); }

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) schema(std::string("model manifest missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    schema(std::string("model manifest field '") + key + "': " + e.what());
  }
}

}  // namespace

void save_model(const std::filesystem::path& json_path, const BodyModel& model) {
  const auto v_count = model.num_vertices();
  const auto k_count = model.num_joints();
  const auto s_count = model.num_shapes();
  const auto f_count = static_cast<int>(model.faces.rows());

  std::vector<char> blob;
  json arrays = json::array();
  auto record = [&](const char* name, const char* dtype, std::size_t count, std::size_t start) {
    arrays.push_back({{"name", name}, {"dtype", dtype}, {"offset", start}, {"count", count}});
  };

  std::size_t start = blob.size();
  append_f32(blob, model.template_vertices);
  record("template", "float32", static_cast<std::size_t>(v_count) * 3, start);
  start = blob.size();
  append_f32(blob, model.shape_dirs);
  record("shape_dirs", "float32", static_cast<std::size_t>(v_count) * 3 * s_count, start);
  start = blob.size();
  append_f32(blob, model.skin_weights);
  record("skin_weights", "float32", static_cast<std::size_t>(v_count) * k_count, start);
  start = blob.size();
  append_f32(blob, model.joint_regressor);
  record("joint_regressor", "float32", static_cast<std::size_t>(k_count) * v_count, start);
  start = blob.size();
  for (Eigen::Index f = 0; f < model.faces.rows(); ++f)
    for (int c = 0; c < 3; ++c) {
      const std::uint32_t idx = model.faces(f, c);
      const char* p = reinterpret_cast<const char*>(&idx);
      blob.insert(blob.end(), p, p + sizeof(idx));
    }
  record("faces", "uint32", static_cast<std::size_t>(f_count) * 3, start);

  auto bin_path = json_path;
  bin_path.replace_extension(".bin");
  nlohmann::ordered_json manifest;
  manifest["V"] = v_count;
  manifest["K"] = k_count;
  manifest["S"] = s_count;
  manifest["F"] = f_count;
  manifest["parents"] = model.parents;
  manifest["joint_names"] = model.joint_names;
  manifest["pelvis"] = model.pelvis;
  manifest["head"] = model.head;
  manifest["neck"] = model.neck;
  manifest["binary"] = bin_path.filename().string();
  manifest["arrays"] = arrays;

  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw Error(Errc::IoError, "cannot write " + bin_path.string());
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + json_path.string());
  out << manifest.dump(2) << "\n";
}

BodyModel load_model(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(Errc::IoError, "cannot open " + json_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    schema(std::string("model manifest is not valid JSON: ") + e.what());
  }

  const int v_count = required<int>(manifest, "V");
  const int k_count = required<int>(manifest, "K");
  const int s_count = required<int>(manifest, "S");
  const int f_count = required<int>(manifest, "F");
  if (v_count <= 0 || k_count <= 0 || s_count < 0 || f_count < 0) schema("non-positive model dimensions");

  BodyModel model;
  model.parents = required<std::vector<int>>(manifest, "parents");
  if (static_cast<int>(model.parents.size()) != k_count) schema("parents length != K");
  if (manifest.contains("joint_names")) model.joint_names = manifest["joint_names"].get<std::vector<std::string>>();
  model.pelvis = manifest.value("pelvis", 0);
  model.head = manifest.value("head", 0);
  model.neck = manifest.value("neck", 0);

  const auto bin_path = json_path.parent_path() / required<std::string>(manifest, "binary");
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error(Errc::IoError, "cannot open " + bin_path.string());
  const std::vector<char> blob{std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>()};

  const json arrays = required<json>(manifest, "arrays");
  auto locate = [&](const std::string& name, std::size_t expected) -> const char* {
    for (const auto& a : arrays) {
      if (a.value("name", "") != name) continue;
      const auto offset = a.at("offset").get<std::size_t>();
      const auto count = a.at("count").get<std::size_t>();
      if (count != expected) schema("array '" + name + "' has " + std::to_string(count) + " elements, expected " +
                                    std::to_string(expected));
      if (offset + count * 4 > blob.size()) schema("array '" + name + "' runs past the end of the binary");
      return blob.data() + offset;
    }
    schema("model manifest has no array '" + name + "'");
  };
  auto fill = [&](const std::string& name, auto& m, Eigen::Index rows, Eigen::Index cols) {
    const char* p = locate(name, static_cast<std::size_t>(rows * cols));
    m.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        float v;
        std::memcpy(&v, p + (r * cols + c) * 4, 4);
        m(r, c) = v;
      }
  };
  fill("template", model.template_vertices, v_count, 3);
  fill("shape_dirs", model.shape_dirs, 3 * v_count, s_count);
  fill("skin_weights", model.skin_weights, v_count, k_count);
  fill("joint_regressor", model.joint_regressor, k_count, v_count);
  const char* fp = locate("faces", static_cast<std::size_t>(f_count) * 3);
  model.faces.resize(f_count, 3);
  std::memcpy(model.faces.data(), fp, static_cast<std::size_t>(f_count) * 3 * 4);

  model.validate();
  return model;
}

}  // namespace evpose
