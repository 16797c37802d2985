#include "gcam/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace gcam {
namespace {

using nlohmann::json;

template <typename U>
void append_le(std::vector<std::uint8_t>& out, U value) {
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, &value, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
    out.insert(out.end(), std::begin(bytes), std::end(bytes));
}

template <typename U>
U read_le(const std::uint8_t* p) {
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, p, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
    U v;
    std::memcpy(&v, bytes, sizeof(U));
    return v;
}

template <typename T>
class Writer {
public:
    json tensor(const BasicTensor<T>& t) {
        json ref = {{"offset", payload.size()}, {"shape", t.shape()}};
        for (T v : t.data()) append_le(payload, v);
        return ref;
    }

    json layer(const Layer<T>& l) {
        json j;
        j["type"] = layer_name(l);
        if (auto* c = std::get_if<Conv2d<T>>(&l)) {
            j["out_channels"] = c->out_channels;
            j["in_channels"] = c->in_channels;
            j["kernel_h"] = c->kernel_h;
            j["kernel_w"] = c->kernel_w;
            j["pad"] = c->pad;
            j["stride"] = c->stride;
            j["weight"] = tensor(c->weight);
            j["bias"] = tensor(c->bias);
        } else if (auto* p = std::get_if<MaxPool2d>(&l)) {
            j["k"] = p->k;
            j["stride"] = p->stride;
        } else if (auto* a = std::get_if<AvgPool2d>(&l)) {
            j["k"] = a->k;
            j["stride"] = a->stride;
        } else if (auto* lin = std::get_if<Linear<T>>(&l)) {
            j["out_features"] = lin->out_features;
            j["in_features"] = lin->in_features;
            j["weight"] = tensor(lin->weight);
            j["bias"] = tensor(lin->bias);
            if (lin->compensation)
                j["compensation"] = {{"from", lin->compensation->from},
                                     {"offset_values", tensor(lin->compensation->offset)}};
        }
        return j;
    }

    json stack(const LayerStack<T>& layers) {
        json arr = json::array();
        for (const auto& l : layers) arr.push_back(layer(l));
        return arr;
    }

    std::vector<std::uint8_t> payload;
};

json attack_to_json(const AttackRecord& rec) {
    const AttackConfig& c = rec.config;
    json j = {{"technique", technique_name(rec.technique)},
              {"c_A", c.c_A},
              {"c_W", c.c_W},
              {"c_I", c.c_I},
              {"epsilon", c.epsilon},
              {"c_G", c.c_G},
              {"c_F", c.c_F},
              {"f_seed", c.f_seed},
              {"s_z", rec.s_z},
              {"target", nullptr},
              {"sticker", nullptr}};
    if (c.target) j["target"] = {{"shape", c.target->shape()}, {"values", c.target->vec()}};
    if (c.sticker)
        j["sticker"] = {{"height", c.sticker->height()}, {"width", c.sticker->width()}, {"bitmap", c.sticker->bitmap()}};
    return j;
}

AttackRecord attack_from_json(const json& j) {
    AttackRecord rec;
    rec.technique = parse_technique(j.at("technique").get<std::string>());
    AttackConfig& c = rec.config;
    c.c_A = j.at("c_A").get<double>();
    c.c_W = j.at("c_W").get<double>();
    c.c_I = j.at("c_I").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.c_G = j.at("c_G").get<double>();
    c.c_F = j.at("c_F").get<double>();
    c.f_seed = j.at("f_seed").get<std::uint64_t>();
    rec.s_z = j.at("s_z").get<double>();
    if (!j.at("target").is_null())
        c.target = Tensor64(j["target"].at("shape").get<Shape>(), j["target"].at("values").get<std::vector<double>>());
    if (!j.at("sticker").is_null())
        c.sticker = StickerPattern(j["sticker"].at("height").get<std::size_t>(),
                                   j["sticker"].at("width").get<std::size_t>(),
                                   j["sticker"].at("bitmap").get<std::vector<std::uint8_t>>());
    return rec;
}

template <typename S, typename T>
class Reader {
public:
    Reader(const std::uint8_t* payload, std::size_t size) : payload_(payload), size_(size) {}

    BasicTensor<T> tensor(const json& ref) const {
        const Shape shape = ref.at("shape").get<Shape>();
        const std::size_t offset = ref.at("offset").get<std::size_t>();
        const std::size_t count = shape_volume(shape);
        if (offset > size_ || count > (size_ - offset) / sizeof(S))
            throw FormatError("model file truncated: tensor at offset " + std::to_string(offset) +
                              " extends past the payload");
        std::vector<T> data(count);
        for (std::size_t i = 0; i < count; ++i)
            data[i] = static_cast<T>(read_le<S>(payload_ + offset + i * sizeof(S)));
        return BasicTensor<T>(shape, std::move(data));
    }

    Layer<T> layer(const json& j) const {
        const std::string type = j.at("type").get<std::string>();
        if (type == "conv2d") {
            Conv2d<T> c;
            c.out_channels = j.at("out_channels").get<std::size_t>();
            c.in_channels = j.at("in_channels").get<std::size_t>();
            c.kernel_h = j.at("kernel_h").get<std::size_t>();
            c.kernel_w = j.at("kernel_w").get<std::size_t>();
            c.pad = j.at("pad").get<std::size_t>();
            c.stride = j.at("stride").get<std::size_t>();
            c.weight = tensor(j.at("weight"));
            c.bias = tensor(j.at("bias"));
            return c;
        }
        if (type == "relu") return ReLU{};
        if (type == "flatten") return Flatten{};
        if (type == "maxpool2d") return MaxPool2d{j.at("k").get<std::size_t>(), j.at("stride").get<std::size_t>()};
        if (type == "avgpool2d") return AvgPool2d{j.at("k").get<std::size_t>(), j.at("stride").get<std::size_t>()};
        if (type == "linear") {
            Linear<T> l;
            l.out_features = j.at("out_features").get<std::size_t>();
            l.in_features = j.at("in_features").get<std::size_t>();
            l.weight = tensor(j.at("weight"));
            l.bias = tensor(j.at("bias"));
            if (j.contains("compensation"))
                l.compensation = Compensation<T>{j["compensation"].at("from").get<std::size_t>(),
                                                 tensor(j["compensation"].at("offset_values"))};
            return l;
        }
        throw FormatError("unknown layer type '" + type + "'");
    }

    LayerStack<T> stack(const json& arr) const {
        LayerStack<T> out;
        for (const auto& j : arr) out.push_back(layer(j));
        return out;
    }

private:
    const std::uint8_t* payload_;
    std::size_t size_;
};

struct Parsed {
    json manifest;
    const std::uint8_t* payload;
    std::size_t payload_size;
};

Parsed parse_container(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 10) throw FormatError("model file truncated: header incomplete");
    if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw FormatError("bad magic: not a GCF1 model file");
    const auto version = read_le<std::uint16_t>(bytes.data() + 4);
    if (version != kModelVersion)
        throw FormatError("unsupported GCF1 version " + std::to_string(version) + " (expected " +
                          std::to_string(kModelVersion) + ")");
    const auto mlen = read_le<std::uint32_t>(bytes.data() + 6);
    if (bytes.size() - 10 < mlen) throw FormatError("model file truncated: manifest incomplete");
    Parsed p;
    try {
        p.manifest = json::parse(bytes.begin() + 10, bytes.begin() + 10 + mlen);
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
    p.payload = bytes.data() + 10 + mlen;
    p.payload_size = bytes.size() - 10 - mlen;
    return p;
}

DType dtype_from_manifest(const json& m) {
    const std::string d = m.at("dtype").get<std::string>();
    if (d == "f32") return DType::F32;
    if (d == "f64") return DType::F64;
    throw FormatError("unknown dtype '" + d + "'");
}

template <typename S, typename T>
Model<T> build_from(const Parsed& p) {
    const json& m = p.manifest;
    Reader<S, T> r(p.payload, p.payload_size);
    Model<T> model;
    model.input_shape = m.at("input_shape").get<Shape>();
    model.conv_stack = r.stack(m.at("conv_stack"));
    model.post_stack = r.stack(m.at("post_stack"));
    if (!m.at("injection").is_null()) model.injection = r.tensor(m["injection"]);
    if (!m.at("featuremap_branch").is_null()) {
        FeaturemapBranch<T> f;
        f.scale = m["featuremap_branch"].at("scale").get<double>();
        f.net = r.stack(m["featuremap_branch"].at("net"));
        model.featuremap_branch = std::move(f);
    }
    if (!m.at("score_branch").is_null())
        model.score_branch = ScoreBranch{m["score_branch"].at("epsilon").get<double>(),
                                         m["score_branch"].at("c_G").get<double>()};
    if (!m.at("attack").is_null()) model.attack = attack_from_json(m["attack"]);
    validate_model(model);
    return model;
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_model(const Model<T>& model) {
    const ModelMeta meta = validate_model(model);
    Writer<T> w;
    json m;
    m["format"] = "GCF1";
    m["dtype"] = dtype_name(dtype_of<T>());
    m["input_shape"] = model.input_shape;
    m["conv_stack"] = w.stack(model.conv_stack);
    m["post_stack"] = w.stack(model.post_stack);
    m["injection"] = model.injection ? w.tensor(*model.injection) : json(nullptr);
    m["featuremap_branch"] = nullptr;
    if (model.featuremap_branch)
        m["featuremap_branch"] = {{"scale", model.featuremap_branch->scale},
                                  {"net", w.stack(model.featuremap_branch->net)}};
    m["score_branch"] = nullptr;
    if (model.score_branch)
        m["score_branch"] = {{"epsilon", model.score_branch->epsilon}, {"c_G", model.score_branch->c_G}};
    m["meta"] = {{"K", meta.channels},      {"N_A", meta.a_pixels},
                 {"N_Z", meta.z_pixels},    {"a_height", meta.a_height},
                 {"a_width", meta.a_width}, {"class_count", meta.class_count}};
    m["attack"] = model.attack ? attack_to_json(*model.attack) : json(nullptr);

    const std::string text = m.dump();
    std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
    append_le<std::uint16_t>(out, kModelVersion);
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), w.payload.begin(), w.payload.end());
    return out;
}

DType encoded_dtype(const std::vector<std::uint8_t>& bytes) {
    return dtype_from_manifest(parse_container(bytes).manifest);
}

template <typename T>
Model<T> decode_model(const std::vector<std::uint8_t>& bytes) {
    const Parsed p = parse_container(bytes);
    try {
        return dtype_from_manifest(p.manifest) == DType::F32 ? build_from<float, T>(p) : build_from<double, T>(p);
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

template <typename T>
void save_model(const Model<T>& model, const std::filesystem::path& path) {
    write_file_bytes(path, encode_model(model));
}

template <typename T>
Model<T> load_model(const std::filesystem::path& path) {
    return decode_model<T>(read_file_bytes(path));
}

DType stored_dtype(const std::filesystem::path& path) { return encoded_dtype(read_file_bytes(path)); }

template std::vector<std::uint8_t> encode_model<float>(const Model<float>&);
template std::vector<std::uint8_t> encode_model<double>(const Model<double>&);
template Model<float> decode_model<float>(const std::vector<std::uint8_t>&);
template Model<double> decode_model<double>(const std::vector<std::uint8_t>&);
template void save_model<float>(const Model<float>&, const std::filesystem::path&);
template void save_model<double>(const Model<double>&, const std::filesystem::path&);
template Model<float> load_model<float>(const std::filesystem::path&);
template Model<double> load_model<double>(const std::filesystem::path&);

}  // namespace gcam
