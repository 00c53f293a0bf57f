#include "fedtt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fedtt {

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw CheckpointError(path + ": truncated checkpoint");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_f64(std::ofstream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::ifstream& in, const std::string& path) {
    std::uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw CheckpointError(path + ": truncated checkpoint");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

Mat vector_block(const std::vector<double>& v) {
    Mat m(1, v.size());
    for (std::size_t i = 0; i < v.size(); ++i) m[i] = v[i];
    return m;
}

}  // namespace

void write_blocks(const std::string& path, const char magic[4],
                  const std::vector<Mat>& blocks) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + path);
    out.write(magic, 4);
    write_u32(out, static_cast<std::uint32_t>(blocks.size()));
    for (const Mat& b : blocks) {
        write_u32(out, 2);
        write_u32(out, static_cast<std::uint32_t>(b.rows()));
        write_u32(out, static_cast<std::uint32_t>(b.cols()));
        for (std::size_t i = 0; i < b.size(); ++i) write_f64(out, b[i]);
    }
    if (!out) throw CheckpointError("write failed: " + path);
}

std::vector<Mat> read_blocks(const std::string& path, const char magic[4]) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path);
    char got[4];
    in.read(got, 4);
    if (!in || std::memcmp(got, magic, 4) != 0)
        throw CheckpointError(path + ": checkpoint magic mismatch");
    const std::uint32_t count = read_u32(in, path);
    std::vector<Mat> blocks;
    blocks.reserve(count);
    for (std::uint32_t b = 0; b < count; ++b) {
        const std::uint32_t ndims = read_u32(in, path);
        if (ndims != 2) throw CheckpointError(path + ": unsupported block rank");
        const std::uint32_t rows = read_u32(in, path);
        const std::uint32_t cols = read_u32(in, path);
        Mat m(rows, cols);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = read_f64(in, path);
        blocks.push_back(std::move(m));
    }
    return blocks;
}

namespace {

Mat mlp_block(const Mlp& mlp) {
    Mat m(1, mlp.params.size());
    for (std::size_t i = 0; i < mlp.params.size(); ++i) m[i] = mlp.params[i];
    return m;
}

void restore_mlp(Mlp& mlp, const Mat& block, const std::string& what) {
    if (block.size() != mlp.params.size())
        throw CheckpointError(what + ": parameter count mismatch");
    for (std::size_t i = 0; i < block.size(); ++i) mlp.params[i] = block[i];
}

Mat meta_block(std::initializer_list<double> values) {
    Mat m(1, values.size());
    std::size_t i = 0;
    for (double v : values) m[i++] = v;
    return m;
}

}  // namespace

void save_tvi_checkpoint(const std::string& path, const SpatialModelParams& sv,
                         const TemporalModelParams& tv) {
    std::vector<Mat> blocks;
    blocks.push_back(meta_block({static_cast<double>(sv.sensors),
                                 static_cast<double>(sv.features),
                                 static_cast<double>(sv.heads),
                                 static_cast<double>(sv.head_dim),
                                 static_cast<double>(tv.window)}));
    blocks.push_back(mlp_block(sv.feature_net));
    blocks.push_back(mlp_block(sv.extension_head));
    blocks.push_back(vector_block(tv.forward_predictor.weights));
    blocks.push_back(meta_block({tv.forward_predictor.bias}));
    blocks.push_back(vector_block(tv.backward_predictor.weights));
    blocks.push_back(meta_block({tv.backward_predictor.bias}));
    write_blocks(path, "TVI1", blocks);
}

void load_tvi_checkpoint(const std::string& path, SpatialModelParams& sv,
                         TemporalModelParams& tv) {
    const auto blocks = read_blocks(path, "TVI1");
    if (blocks.size() != 7) throw CheckpointError(path + ": unexpected block count");
    const Mat& meta = blocks[0];
    if (meta.size() != 5 || static_cast<std::size_t>(meta[0]) != sv.sensors ||
        static_cast<std::size_t>(meta[1]) != sv.features ||
        static_cast<std::size_t>(meta[2]) != sv.heads ||
        static_cast<std::size_t>(meta[3]) != sv.head_dim ||
        static_cast<std::size_t>(meta[4]) != tv.window)
        throw CheckpointError(path + ": model dimensions disagree with checkpoint");
    restore_mlp(sv.feature_net, blocks[1], "feature_net");
    restore_mlp(sv.extension_head, blocks[2], "extension_head");
    if (blocks[3].size() != tv.window || blocks[5].size() != tv.window)
        throw CheckpointError(path + ": AR lag count mismatch");
    for (std::size_t i = 0; i < tv.window; ++i) {
        tv.forward_predictor.weights[i] = blocks[3][i];
        tv.backward_predictor.weights[i] = blocks[5][i];
    }
    tv.forward_predictor.bias = blocks[4][0];
    tv.backward_predictor.bias = blocks[6][0];
}

void save_tda_checkpoint(const std::string& path, const TransformBundle& tb,
                         const GeneratorParams& gen) {
    std::vector<Mat> blocks;
    blocks.push_back(meta_block({static_cast<double>(gen.src_sensors),
                                 static_cast<double>(gen.dst_sensors),
                                 static_cast<double>(gen.features),
                                 static_cast<double>(gen.hidden), tb.residual_net,
                                 tb.residual_proto}));
    blocks.push_back(tb.a_net);
    blocks.push_back(tb.a_proto);
    blocks.push_back(mlp_block(gen.net_branch));
    blocks.push_back(mlp_block(gen.proto_branch));
    blocks.push_back(mlp_block(gen.direct_branch));
    write_blocks(path, "TDA1", blocks);
}

void load_tda_checkpoint(const std::string& path, TransformBundle& tb, GeneratorParams& gen) {
    const auto blocks = read_blocks(path, "TDA1");
    if (blocks.size() != 6) throw CheckpointError(path + ": unexpected block count");
    const Mat& meta = blocks[0];
    if (meta.size() != 6 || static_cast<std::size_t>(meta[0]) != gen.src_sensors ||
        static_cast<std::size_t>(meta[1]) != gen.dst_sensors ||
        static_cast<std::size_t>(meta[2]) != gen.features ||
        static_cast<std::size_t>(meta[3]) != gen.hidden)
        throw CheckpointError(path + ": model dimensions disagree with checkpoint");
    tb.residual_net = meta[4];
    tb.residual_proto = meta[5];
    tb.a_net = blocks[1];
    tb.a_proto = blocks[2];
    restore_mlp(gen.net_branch, blocks[3], "net_branch");
    restore_mlp(gen.proto_branch, blocks[4], "proto_branch");
    restore_mlp(gen.direct_branch, blocks[5], "direct_branch");
}

void save_predictor_checkpoint(const std::string& path, const PredictorModel& model) {
    std::vector<Mat> blocks;
    blocks.push_back(meta_block({static_cast<double>(model.input_window()),
                                 static_cast<double>(model.horizon()),
                                 model.kind() == "linear_ar" ? 1.0 : 0.0}));
    const auto params = model.param_blocks();
    blocks.insert(blocks.end(), params.begin(), params.end());
    write_blocks(path, "FTP1", blocks);
}

void load_predictor_checkpoint(const std::string& path, PredictorModel& model) {
    const auto blocks = read_blocks(path, "FTP1");
    if (blocks.empty()) throw CheckpointError(path + ": empty checkpoint");
    const Mat& meta = blocks[0];
    if (meta.size() != 3 || static_cast<std::size_t>(meta[0]) != model.input_window() ||
        static_cast<std::size_t>(meta[1]) != model.horizon())
        throw CheckpointError(path + ": window sizes disagree with checkpoint");
    const bool is_ar = meta[2] != 0.0;
    if (is_ar != (model.kind() == "linear_ar"))
        throw CheckpointError(path + ": predictor kind disagrees with checkpoint");
    model.set_param_blocks({blocks.begin() + 1, blocks.end()});
}

}  // namespace fedtt
