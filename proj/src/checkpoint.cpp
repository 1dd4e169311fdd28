#include "mstgat/checkpoint.hpp"

#include "mstgat/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace mstgat {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "MSTGAT-CHECKPOINT";

json mat_to_json(const Mat& m)
{
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

json adj_to_json(const AdjMat& m)
{
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<int>(m.data(), m.data() + m.size())}};
}

template <class M, class T>
M matrix_from_json(const json& j, const std::string& what)
{
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<T>>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw DataError("checkpoint: malformed matrix '" + what + "'");
    }
    M m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

std::string header_line(const ModelState& state, const std::string& body)
{
    std::ostringstream h;
    h << kMagic << " " << kCheckpointFormat << " tool=" << kToolVersion << " config=" << state.config.hash()
      << " fnv1a=" << hex64(fnv1a(body));
    return h.str();
}

}  // namespace

std::string serialize_checkpoint(const ModelState& state)
{
    json body;
    body["config"] = state.config.to_toml();
    body["names"] = state.names;
    body["modality"] = state.modality;
    body["norm"] = {{"offset", state.norm.offset}, {"scale", state.norm.scale}};

    json params = json::object();
    for (const auto& [name, m] : state.params.list()) params[name] = mat_to_json(*m);
    body["params"] = std::move(params);

    body["topology"] = {{"k", state.topology.k},
                        {"topk", adj_to_json(state.topology.topk)},
                        {"intra", adj_to_json(state.topology.intra)},
                        {"inter", adj_to_json(state.topology.inter)}};
    body["calibration"] = {{"threshold", state.calibration.threshold},
                           {"val_scores", state.calibration.val_scores}};
    json trace = json::array();
    for (const auto& r : state.loss_trace) {
        trace.push_back({{"epoch", r.epoch}, {"l_rec", r.l_rec}, {"l_pred", r.l_pred}, {"l_joint", r.l_joint}});
    }
    body["loss_trace"] = std::move(trace);

    const std::string text = body.dump();
    return header_line(state, text) + "\n" + text + "\n";
}

ModelState deserialize_checkpoint(const std::string& text)
{
    const auto nl = text.find('\n');
    if (nl == std::string::npos) throw DataError("checkpoint: missing header");
    std::istringstream header(text.substr(0, nl));
    std::string magic;
    int format = 0;
    header >> magic >> format;
    if (magic != kMagic) throw DataError("checkpoint: not an mstgat checkpoint");
    if (format != kCheckpointFormat) {
        throw DataError("checkpoint: format version " + std::to_string(format) + " is not supported (expected " +
                        std::to_string(kCheckpointFormat) + ")");
    }
    std::string tool, config_hash, checksum;
    std::string token;
    while (header >> token) {
        if (token.rfind("tool=", 0) == 0) tool = token.substr(5);
        else if (token.rfind("config=", 0) == 0) config_hash = token.substr(7);
        else if (token.rfind("fnv1a=", 0) == 0) checksum = token.substr(6);
    }
    if (tool != kToolVersion) {
        throw DataError("checkpoint: written by " + std::string(kToolName) + " " + tool + ", this is " +
                        std::string(kToolVersion));
    }

    std::string body_text = text.substr(nl + 1);
    while (!body_text.empty() && (body_text.back() == '\n' || body_text.back() == '\r')) body_text.pop_back();
    if (hex64(fnv1a(body_text)) != checksum) throw DataError("checkpoint: checksum mismatch (file is corrupted)");

    try {
        const json body = json::parse(body_text);
        const Config cfg = parse_config(body.at("config").get<std::string>());
        if (cfg.hash() != config_hash) throw DataError("checkpoint: config hash mismatch");

        NormStats norm;
        norm.offset = body.at("norm").at("offset").get<std::vector<double>>();
        norm.scale = body.at("norm").at("scale").get<std::vector<double>>();
        ModelState state = init_model(cfg, body.at("names").get<std::vector<std::string>>(),
                                      body.at("modality").get<std::vector<int>>(), norm);

        const json& params = body.at("params");
        std::size_t matched = 0;
        for (auto& [name, m] : state.params.list()) {
            if (!params.contains(name)) throw DataError("checkpoint: missing parameter '" + name + "'");
            Mat loaded = matrix_from_json<Mat, double>(params.at(name), name);
            if (loaded.rows() != m->rows() || loaded.cols() != m->cols()) {
                throw DataError("checkpoint: parameter '" + name + "' has the wrong shape");
            }
            *m = std::move(loaded);
            ++matched;
        }
        if (matched != params.size()) throw DataError("checkpoint: unexpected extra parameters");

        const json& topo = body.at("topology");
        state.topology.k = topo.at("k").get<int>();
        state.topology.topk = matrix_from_json<AdjMat, int>(topo.at("topk"), "topk");
        state.topology.intra = matrix_from_json<AdjMat, int>(topo.at("intra"), "intra");
        state.topology.inter = matrix_from_json<AdjMat, int>(topo.at("inter"), "inter");

        state.calibration.threshold = body.at("calibration").at("threshold").get<double>();
        state.calibration.val_scores = body.at("calibration").at("val_scores").get<std::vector<double>>();
        for (const auto& r : body.at("loss_trace")) {
            state.loss_trace.push_back({r.at("epoch").get<int>(), r.at("l_rec").get<double>(),
                                        r.at("l_pred").get<double>(), r.at("l_joint").get<double>()});
        }
        return state;
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: malformed body: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << serialize_checkpoint(state);
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace mstgat
