#include "cmp/checkpoint.hpp"

#include <stdexcept>

#include "cmp/csv.hpp"

namespace cmp {
namespace {

std::string shape_text(const Tensor::Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

Tensor::Shape parse_shape(std::string_view text) {
  Tensor::Shape shape;
  text = trim(text);
  if (text.empty()) return shape;
  std::size_t start = 0;
  while (true) {
    const auto x = text.find('x', start);
    const auto part = text.substr(start, x == std::string_view::npos ? text.npos : x - start);
    const long long v = parse_int(part);
    if (v < 0) throw std::invalid_argument("negative dimension in shape");
    shape.push_back(static_cast<std::size_t>(v));
    if (x == std::string_view::npos) break;
    start = x + 1;
  }
  return shape;
}

std::vector<std::string_view> lines_of(const std::string& text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::size_t end = nl == std::string::npos ? text.size() : nl;
    std::string_view line(text.data() + pos, end - pos);
    if (!trim(line).empty()) out.push_back(line);
    pos = end + 1;
  }
  return out;
}

}  // namespace

void save_parameters(const std::vector<Parameter>& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string manifest = "name,shape\n";
  for (const auto& p : params) {
    manifest += p.name + "," + shape_text(p.value.shape()) + "\n";
    const std::size_t cols = p.value.rank() == 2 ? p.value.cols() : p.value.size();
    std::string body;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      append_double(body, p.value[i]);
      body += (cols == 0 || (i + 1) % cols == 0) ? '\n' : ',';
    }
    write_text_file(dir / (p.name + ".csv"), body);
  }
  write_text_file(dir / "manifest.csv", manifest);
}

std::vector<Parameter> load_parameters(const std::filesystem::path& dir) {
  const std::string manifest = read_text_file(dir / "manifest.csv");
  const auto lines = lines_of(manifest);
  if (lines.empty() || trim(lines[0]) != "name,shape") {
    throw std::invalid_argument(dir.string() + "/manifest.csv: missing 'name,shape' header");
  }
  std::vector<Parameter> out;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto fields = split_csv_line(lines[k]);
    if (fields.size() != 2) {
      throw std::invalid_argument("manifest.csv:" + std::to_string(k + 1) + ": expected name,shape");
    }
    Parameter p;
    p.name = std::string(fields[0]);
    const Tensor::Shape shape = parse_shape(fields[1]);
    std::vector<double> data;
    const std::string body = read_text_file(dir / (p.name + ".csv"));
    for (auto line : lines_of(body))
      for (auto f : split_csv_line(line)) data.push_back(parse_double(f));
    p.value = Tensor(shape, std::move(data));
    out.push_back(std::move(p));
  }
  return out;
}

void load_into(Model& model, const std::vector<Parameter>& params) {
  auto& dst = model.parameters();
  if (dst.size() != params.size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(params.size()) +
                                " tensors, model expects " + std::to_string(dst.size()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != params[i].name || !dst[i].value.same_shape(params[i].value)) {
      throw std::invalid_argument("checkpoint tensor '" + params[i].name + "' " +
                                  params[i].value.shape_string() + " does not match '" +
                                  dst[i].name + "' " + dst[i].value.shape_string());
    }
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].value = params[i].value;
}

void write_embeddings(const std::filesystem::path& path, const Tensor& embeddings,
                      const std::vector<int>& labels) {
  if (embeddings.rank() != 2 || embeddings.rows() != labels.size()) {
    throw ShapeError("embeddings " + embeddings.shape_string() + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::string out = "node_id,label";
  for (std::size_t k = 0; k < embeddings.cols(); ++k) out += ",e_" + std::to_string(k);
  out += '\n';
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += std::to_string(labels[i]);
    for (double v : embeddings.row(i)) {
      out += ',';
      append_double(out, v);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

}  // namespace cmp
