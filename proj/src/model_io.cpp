#include "deta/model_io.hpp"

#include <string>

#include <nlohmann/json.hpp>

#include "deta/episode_io.hpp"
#include "deta/error.hpp"

namespace deta {
namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* name) {
  if (!j.is_array() || j.empty()) throw Error(ErrorCode::SchemaError, std::string(name) + " must be a non-empty matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::SchemaError, std::string(name) + " is ragged");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

json model_to_json(const Model& model) {
  const HeadParams& h = model.head;
  json bank = json::object();
  for (const auto& [label, entries] : model.bank.classes()) {
    json list = json::array();
    for (const auto& e : entries) {
      list.push_back({{"sample_id", e.sample_id},
                      {"box", {e.box.row0, e.box.col0, e.box.row1, e.box.col1}},
                      {"weight", e.weight}});
    }
    bank[std::to_string(label)] = std::move(list);
  }
  json omega = json::object();
  for (const auto& [id, w] : model.accumulator.omega) omega[std::to_string(id)] = w;
  return {{"config", to_json(model.config)},
          {"head",
           {{"w1", matrix_to_json(h.w1)},
            {"b1", std::vector<double>(h.b1.data(), h.b1.data() + h.b1.size())},
            {"w2", matrix_to_json(h.w2)},
            {"b2", std::vector<double>(h.b2.data(), h.b2.data() + h.b2.size())}}},
          {"bank", {{"capacity", model.bank.capacity()}, {"classes", std::move(bank)}}},
          {"accumulator", {{"t", model.accumulator.t}, {"gamma", model.accumulator.gamma}, {"omega", omega}}}};
}

Model model_from_json(const json& j) {
  Model m;
  try {
    m.config = adapt_config_from_json(j.at("config"));
    const json& h = j.at("head");
    m.head.w1 = matrix_from_json(h.at("w1"), "w1");
    m.head.b1 = vector_from_json(h.at("b1"));
    m.head.w2 = matrix_from_json(h.at("w2"), "w2");
    m.head.b2 = vector_from_json(h.at("b2"));
    if (m.head.b1.size() != m.head.w1.cols() || m.head.w2.rows() != m.head.w1.cols() ||
        m.head.b2.size() != m.head.w2.cols()) {
      throw Error(ErrorCode::SchemaError, "head shapes disagree");
    }
    const json& bank = j.at("bank");
    m.bank = MemoryBank(bank.at("capacity").get<int>());
    for (const auto& [label, list] : bank.at("classes").items()) {
      std::vector<BankEntry> entries;
      for (const auto& e : list) {
        const auto box = e.at("box").get<std::vector<int>>();
        if (box.size() != 4) throw Error(ErrorCode::SchemaError, "box must have 4 entries");
        entries.push_back({e.at("sample_id").get<SampleId>(), {box[0], box[1], box[2], box[3]},
                           e.at("weight").get<double>()});
      }
      m.bank.set_entries(std::stoi(label), std::move(entries));
    }
    const json& acc = j.at("accumulator");
    m.accumulator.t = acc.at("t").get<int>();
    m.accumulator.gamma = acc.at("gamma").get<double>();
    for (const auto& [id, w] : acc.at("omega").items()) m.accumulator.omega[std::stoll(id)] = w.get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("model file: ") + e.what());
  } catch (const std::logic_error& e) {
    throw Error(ErrorCode::SchemaError, std::string("model file: ") + e.what());
  }
  return m;
}

void write_model(const Model& model, const std::filesystem::path& path) {
  write_text_file(path, model_to_json(model).dump() + "\n");
}

Model read_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

}  // namespace deta
