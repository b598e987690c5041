#include "kltwin/kltw_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace kltwin {

static_assert(std::endian::native == std::endian::little,
              "KLTW serialization assumes a little-endian host");
static_assert(sizeof(double) == 8);

namespace {

constexpr char kltw_magic[4] = {'K', 'L', 'T', 'W'};
constexpr std::uint32_t max_name_length = 4096;
constexpr std::uint32_t max_rank = 2;

std::string manifest_path(const std::filesystem::path& path) { return path.string() + ".json"; }

} // namespace

Index KltwRecord::element_count() const {
    Index count = 1;
    for (Index d : dims) count *= d;
    return count;
}

bool KltwFile::contains(const std::string& name) const {
    for (const KltwRecord& r : records_)
        if (r.name == name) return true;
    return false;
}

const KltwRecord& KltwFile::at(const std::string& name) const {
    for (const KltwRecord& r : records_)
        if (r.name == name) return r;
    throw FormatError("record '" + name + "' missing from container", 0);
}

void KltwFile::add_scalar(const std::string& name, double value) {
    KltwRecord r;
    r.name = name;
    r.data = Mat::Constant(1, 1, value);
    records_.push_back(std::move(r));
}

void KltwFile::add_vector(const std::string& name, const Vec& value) {
    KltwRecord r;
    r.name = name;
    r.dims = {value.size()};
    r.data = value;
    records_.push_back(std::move(r));
}

void KltwFile::add_matrix(const std::string& name, const Mat& value) {
    KltwRecord r;
    r.name = name;
    r.dims = {value.rows(), value.cols()};
    r.data = value;
    records_.push_back(std::move(r));
}

void KltwFile::add_record(KltwRecord record) { records_.push_back(std::move(record)); }

double KltwFile::scalar(const std::string& name) const {
    const KltwRecord& r = at(name);
    if (!r.dims.empty()) throw FormatError("record '" + name + "' is not a scalar", 0);
    return r.data(0, 0);
}

Vec KltwFile::vector(const std::string& name) const {
    const KltwRecord& r = at(name);
    if (r.dims.size() != 1) throw FormatError("record '" + name + "' is not a vector", 0);
    return r.data.col(0);
}

Mat KltwFile::matrix(const std::string& name) const {
    const KltwRecord& r = at(name);
    if (r.dims.size() != 2) throw FormatError("record '" + name + "' is not a matrix", 0);
    return r.data;
}

// --- binary writer -----------------------------------------------------------

namespace {

void write_bytes(std::ofstream& out, const void* src, std::size_t n) {
    out.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
}

void write_u32(std::ofstream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
void write_u64(std::ofstream& out, std::uint64_t v) { write_bytes(out, &v, 8); }

nlohmann::json manifest_of(const KltwFile& file) {
    nlohmann::json records = nlohmann::json::array();
    for (const KltwRecord& r : file.records()) {
        nlohmann::json dims = nlohmann::json::array();
        for (Index d : r.dims) dims.push_back(d);
        records.push_back({{"name", r.name}, {"dtype", "f64le"}, {"dims", dims}});
    }
    return nlohmann::json{{"format", "KLTW"},
                          {"version", file.version},
                          {"layout", "column_major"},
                          {"records", records}};
}

} // namespace

void save_kltw(const std::filesystem::path& path, const KltwFile& file) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidArgument("cannot open '" + tmp.string() + "' for writing");
        write_bytes(out, kltw_magic, 4);
        write_u32(out, file.version);
        for (const KltwRecord& r : file.records()) {
            if (r.name.size() > max_name_length)
                throw InvalidArgument("record name too long: " + r.name);
            write_u32(out, static_cast<std::uint32_t>(r.name.size()));
            write_bytes(out, r.name.data(), r.name.size());
            write_u32(out, 0);  // dtype: f64 little-endian
            write_u32(out, static_cast<std::uint32_t>(r.dims.size()));
            for (Index d : r.dims) write_u64(out, static_cast<std::uint64_t>(d));
            write_bytes(out, r.data.data(), static_cast<std::size_t>(r.element_count()) * 8);
        }
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw InvalidArgument("write failed for '" + path.string() + "'");
        }
    }
    std::filesystem::rename(tmp, path);

    std::ofstream manifest(manifest_path(path), std::ios::trunc);
    if (!manifest) throw InvalidArgument("cannot write manifest for '" + path.string() + "'");
    manifest << manifest_of(file).dump(2) << '\n';
}

// --- binary reader -----------------------------------------------------------

namespace {

class Reader {
  public:
    explicit Reader(const std::filesystem::path& path)
        : in_(path, std::ios::binary), size_(0) {
        if (!in_) throw InvalidArgument("cannot open '" + path.string() + "' for reading");
        std::error_code ec;
        const auto size = std::filesystem::file_size(path, ec);
        if (ec) throw InvalidArgument("cannot stat '" + path.string() + "'");
        size_ = static_cast<std::size_t>(size);
    }

    std::size_t offset() const { return offset_; }
    std::size_t remaining() const { return size_ - offset_; }
    bool at_end() const { return offset_ >= size_; }

    void read_bytes(void* dst, std::size_t n, const char* what) {
        if (n > remaining()) throw FormatError(std::string("truncated ") + what, offset_);
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError(std::string("truncated ") + what, offset_);
        offset_ += n;
    }

    std::uint32_t read_u32(const char* what) {
        std::uint32_t v = 0;
        read_bytes(&v, 4, what);
        return v;
    }

    std::uint64_t read_u64(const char* what) {
        std::uint64_t v = 0;
        read_bytes(&v, 8, what);
        return v;
    }

  private:
    std::ifstream in_;
    std::size_t size_ = 0;
    std::size_t offset_ = 0;
};

} // namespace

KltwFile load_kltw(const std::filesystem::path& path) {
    Reader reader(path);

    char magic[4] = {};
    reader.read_bytes(magic, 4, "magic");
    if (std::memcmp(magic, kltw_magic, 4) != 0)
        throw FormatError("not a KLTW container", 0);

    KltwFile file;
    file.version = reader.read_u32("version");
    if (file.version != kltw_format_version)
        throw FormatError("unsupported container version " + std::to_string(file.version), 4);

    while (!reader.at_end()) {
        const std::size_t record_start = reader.offset();
        const std::uint32_t name_length = reader.read_u32("record header");
        if (name_length > max_name_length)
            throw FormatError("record name too long", record_start);
        std::string name(name_length, '\0');
        reader.read_bytes(name.data(), name_length, "record name");
        if (file.contains(name))
            throw FormatError("duplicate record '" + name + "'", record_start);

        const std::size_t dtype_offset = reader.offset();
        const std::uint32_t dtype = reader.read_u32("record dtype");
        if (dtype != 0)
            throw FormatError("unsupported dtype code " + std::to_string(dtype), dtype_offset);

        const std::size_t rank_offset = reader.offset();
        const std::uint32_t rank = reader.read_u32("record rank");
        if (rank > max_rank)
            throw FormatError("unsupported rank " + std::to_string(rank), rank_offset);

        KltwRecord record;
        record.name = std::move(name);
        std::uint64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const std::size_t dim_offset = reader.offset();
            const std::uint64_t dim = reader.read_u64("record dims");
            if (dim > static_cast<std::uint64_t>(std::numeric_limits<Index>::max()) ||
                (dim != 0 && count > reader.remaining() / dim))
                throw FormatError("record dimensions overflow the file", dim_offset);
            count *= dim;
            record.dims.push_back(static_cast<Index>(dim));
        }
        if (count * 8 > reader.remaining())
            throw FormatError("truncated record payload", reader.offset());

        const Index rows = rank == 2 ? record.dims[0] : static_cast<Index>(count);
        const Index cols = rank == 2 ? record.dims[1] : 1;
        record.data.resize(rows, cols);
        reader.read_bytes(record.data.data(), static_cast<std::size_t>(count) * 8,
                          "record payload");
        if (rank == 0 && record.data.size() != 1)
            throw FormatError("scalar record with wrong payload", record_start);
        file.add_record(std::move(record));
    }
    return file;
}

// --- typed artifacts ---------------------------------------------------------

namespace {

constexpr double tag_linear = 0.0;
constexpr double tag_nonlinear = 1.0;

void put_grid(KltwFile& file, const Grid& grid) {
    file.add_scalar("grid/n_x", static_cast<double>(grid.n_x));
    file.add_scalar("grid/n_t", static_cast<double>(grid.n_t));
    file.add_scalar("grid/length", grid.L);
    file.add_scalar("grid/duration", grid.T);
}

Grid get_grid(const KltwFile& file) {
    return build_grid(static_cast<Index>(file.scalar("grid/n_x")),
                      static_cast<Index>(file.scalar("grid/n_t")), file.scalar("grid/length"),
                      file.scalar("grid/duration"));
}

void put_basis(KltwFile& file, const std::string& prefix, const KlBasis& basis) {
    file.add_scalar(prefix + "/kind", static_cast<double>(static_cast<int>(basis.kind())));
    file.add_vector(prefix + "/mean", basis.mean.values);
    file.add_vector(prefix + "/eigenvalues", basis.eigenvalues);
    file.add_matrix(prefix + "/modes", basis.modes);
    file.add_scalar(prefix + "/rtol", basis.rtol);
}

KlBasis get_basis(const KltwFile& file, const std::string& prefix, const Grid& grid) {
    const int kind_code = static_cast<int>(file.scalar(prefix + "/kind"));
    if (kind_code < 0 || kind_code > 2)
        throw FormatError("record '" + prefix + "/kind' holds no field kind", 0);
    const FieldKind kind = static_cast<FieldKind>(kind_code);
    KlBasis basis;
    const Vec mean = file.vector(prefix + "/mean");
    if (mean.size() != field_length(grid, kind))
        throw FormatError("record '" + prefix + "/mean' does not fit the stored grid", 0);
    basis.mean = Field(grid, kind, mean);
    basis.eigenvalues = file.vector(prefix + "/eigenvalues");
    basis.modes = file.matrix(prefix + "/modes");
    basis.rtol = file.scalar(prefix + "/rtol");
    if (basis.modes.rows() != mean.size() || basis.modes.cols() != basis.eigenvalues.size())
        throw FormatError("record '" + prefix + "/modes' shape mismatch", 0);
    return basis;
}

void put_kernel(KltwFile& file, const std::string& name, const SeKernel& kernel) {
    Vec packed(5);
    packed << kernel.variance, kernel.l.has_value() ? 1.0 : 0.0, kernel.l.value_or(0.0),
        kernel.tau.has_value() ? 1.0 : 0.0, kernel.tau.value_or(0.0);
    file.add_vector(name, packed);
}

SeKernel get_kernel(const KltwFile& file, const std::string& name) {
    const Vec packed = file.vector(name);
    if (packed.size() != 5) throw FormatError("record '" + name + "' is not a kernel", 0);
    SeKernel kernel;
    kernel.variance = packed[0];
    if (packed[1] != 0.0) kernel.l = packed[2];
    if (packed[3] != 0.0) kernel.tau = packed[4];
    return kernel;
}

void put_condition(KltwFile& file, const ConditionSpec& condition) {
    if (const auto* linear = std::get_if<LinearCondition>(&condition)) {
        file.add_scalar("condition/kind", tag_linear);
        file.add_vector("condition/f_mean", linear->f_mean.values);
        file.add_vector("condition/q_mean", linear->q_mean.values);
        file.add_vector("condition/k", linear->k.values);
        put_kernel(file, "condition/f_kernel", linear->f_kernel);
        put_kernel(file, "condition/q_kernel", linear->q_kernel);
        file.add_scalar("condition/alpha", linear->alpha);
        file.add_scalar("condition/beta", linear->beta);
        file.add_vector("condition/h0_range", Vec{{linear->h0.lo, linear->h0.hi}});
        file.add_vector("condition/h_l_range", Vec{{linear->h_l.lo, linear->h_l.hi}});
        file.add_vector("condition/h_r_range", Vec{{linear->h_r.lo, linear->h_r.hi}});
        file.add_scalar("condition/x_star", linear->x_star);
        return;
    }
    const auto& nonlinear = std::get<NonlinearCondition>(condition);
    file.add_scalar("condition/kind", tag_nonlinear);
    file.add_scalar("condition/y_variance", nonlinear.y_variance);
    file.add_scalar("condition/y_corr", nonlinear.y_corr);
    file.add_scalar("condition/y_terms", static_cast<double>(nonlinear.y_terms));
    file.add_scalar("condition/h0", nonlinear.h0);
    file.add_scalar("condition/h_l", nonlinear.h_l);
    file.add_scalar("condition/h_r", nonlinear.h_r);
}

ScalarRange get_range(const KltwFile& file, const std::string& name) {
    const Vec packed = file.vector(name);
    if (packed.size() != 2) throw FormatError("record '" + name + "' is not a range", 0);
    return ScalarRange{packed[0], packed[1]};
}

ConditionSpec get_condition(const KltwFile& file, const Grid& grid) {
    if (file.scalar("condition/kind") == tag_linear) {
        LinearCondition linear;
        linear.f_mean = Field(grid, FieldKind::space_time, file.vector("condition/f_mean"));
        linear.q_mean = Field(grid, FieldKind::time_only, file.vector("condition/q_mean"));
        linear.k = Field(grid, FieldKind::space_only, file.vector("condition/k"));
        linear.f_kernel = get_kernel(file, "condition/f_kernel");
        linear.q_kernel = get_kernel(file, "condition/q_kernel");
        linear.alpha = file.scalar("condition/alpha");
        linear.beta = file.scalar("condition/beta");
        linear.h0 = get_range(file, "condition/h0_range");
        linear.h_l = get_range(file, "condition/h_l_range");
        linear.h_r = get_range(file, "condition/h_r_range");
        linear.x_star = file.scalar("condition/x_star");
        return linear;
    }
    NonlinearCondition nonlinear;
    nonlinear.y_variance = file.scalar("condition/y_variance");
    nonlinear.y_corr = file.scalar("condition/y_corr");
    nonlinear.y_terms = static_cast<Index>(file.scalar("condition/y_terms"));
    nonlinear.h0 = file.scalar("condition/h0");
    nonlinear.h_l = file.scalar("condition/h_l");
    nonlinear.h_r = file.scalar("condition/h_r");
    return nonlinear;
}

} // namespace

void save_model(const std::filesystem::path& path, const SurrogateModel& model) {
    KltwFile file;
    file.add_scalar("artifact", 0.0);  // 0 = surrogate model, 1 = dataset
    put_grid(file, model.grid);
    file.add_scalar("model/problem",
                    model.problem == ProblemTag::linear ? tag_linear : tag_nonlinear);
    file.add_scalar("model/map_kind", static_cast<double>(static_cast<int>(model.map_kind)));
    file.add_scalar("model/gamma", model.gamma);
    put_condition(file, model.condition);
    put_basis(file, "state", model.state);

    if (model.problem == ProblemTag::linear) {
        put_basis(file, "f_basis", model.f_basis);
        put_basis(file, "q_basis", model.q_basis);
        file.add_scalar("model/h0_mean", model.h0_mean);
        file.add_scalar("model/h_l_mean", model.h_l_mean);
        file.add_scalar("model/h_r_mean", model.h_r_mean);
        file.add_scalar("model/x_star", model.x_star);
    } else {
        put_basis(file, "k_basis", model.k_basis);
        file.add_vector("model/k_mf", model.k_mf.values);
    }

    if (model.map_kind == MapKind::mlp) {
        if (!model.mlp) throw InvalidArgument("save_model: network map kind without a network");
        const Mlp& net = *model.mlp;
        file.add_scalar("mlp/layers", static_cast<double>(net.n_layers()));
        for (Index i = 0; i < net.n_layers(); ++i) {
            file.add_matrix("mlp/w" + std::to_string(i), net.weight(i));
            file.add_vector("mlp/b" + std::to_string(i), net.bias(i));
        }
    } else {
        file.add_matrix("map/W", model.linear_map.W);
        file.add_vector("map/bias", model.linear_map.bias);
    }
    save_kltw(path, file);
}

SurrogateModel load_model(const std::filesystem::path& path) {
    const KltwFile file = load_kltw(path);
    if (file.scalar("artifact") != 0.0)
        throw FormatError("container does not hold a surrogate model", 0);

    SurrogateModel model;
    model.grid = get_grid(file);
    model.problem =
        file.scalar("model/problem") == tag_linear ? ProblemTag::linear : ProblemTag::nonlinear;
    const int map_code = static_cast<int>(file.scalar("model/map_kind"));
    if (map_code < 0 || map_code > 2)
        throw FormatError("record 'model/map_kind' holds no map kind", 0);
    model.map_kind = static_cast<MapKind>(map_code);
    model.gamma = file.scalar("model/gamma");
    model.condition = get_condition(file, model.grid);
    model.state = get_basis(file, "state", model.grid);

    if (model.problem == ProblemTag::linear) {
        model.f_basis = get_basis(file, "f_basis", model.grid);
        model.q_basis = get_basis(file, "q_basis", model.grid);
        model.h0_mean = file.scalar("model/h0_mean");
        model.h_l_mean = file.scalar("model/h_l_mean");
        model.h_r_mean = file.scalar("model/h_r_mean");
        model.x_star = file.scalar("model/x_star");
    } else {
        model.k_basis = get_basis(file, "k_basis", model.grid);
        const Vec k_mf = file.vector("model/k_mf");
        if (k_mf.size() != model.grid.space_nodes())
            throw FormatError("record 'model/k_mf' does not fit the stored grid", 0);
        model.k_mf = Field(model.grid, FieldKind::space_only, k_mf);
    }

    if (model.map_kind == MapKind::mlp) {
        const Index layers = static_cast<Index>(file.scalar("mlp/layers"));
        if (layers < 1) throw FormatError("record 'mlp/layers' must be positive", 0);
        std::vector<Mat> weights;
        std::vector<Vec> biases;
        for (Index i = 0; i < layers; ++i) {
            weights.push_back(file.matrix("mlp/w" + std::to_string(i)));
            biases.push_back(file.vector("mlp/b" + std::to_string(i)));
        }
        MlpShape shape;
        shape.n_in = weights.front().cols();
        shape.n_out = weights.back().rows();
        for (Index i = 0; i + 1 < layers; ++i) shape.hidden.push_back(weights[i].rows());
        RngStream scratch(0, 0);
        Mlp net(shape, scratch);
        for (Index i = 0; i < layers; ++i) {
            if (net.weight(i).rows() != weights[i].rows() ||
                net.weight(i).cols() != weights[i].cols() ||
                net.bias(i).size() != biases[i].size())
                throw FormatError("network records are not a consistent layer stack", 0);
            net.weight(i) = weights[i];
            net.bias(i) = biases[i];
        }
        model.mlp = std::move(net);
    } else {
        model.linear_map.W = file.matrix("map/W");
        model.linear_map.bias = file.vector("map/bias");
    }
    model.validate();
    return model;
}

void save_dataset(const std::filesystem::path& path, const LinearDataset& data) {
    KltwFile file;
    file.add_scalar("artifact", 1.0);
    put_grid(file, data.grid);
    file.add_scalar("dataset/kind", tag_linear);
    file.add_vector("dataset/k", data.k.values);
    file.add_matrix("dataset/f", data.f);
    file.add_matrix("dataset/q", data.q);
    file.add_matrix("dataset/xi_f", data.xi_f);
    file.add_matrix("dataset/xi_q", data.xi_q);
    file.add_vector("dataset/h0", data.h0);
    file.add_vector("dataset/h_l", data.h_l);
    file.add_vector("dataset/h_r", data.h_r);
    file.add_matrix("dataset/h", data.h);
    save_kltw(path, file);
}

void save_dataset(const std::filesystem::path& path, const NonlinearDataset& data) {
    KltwFile file;
    file.add_scalar("artifact", 1.0);
    put_grid(file, data.grid);
    file.add_scalar("dataset/kind", tag_nonlinear);
    file.add_matrix("dataset/k", data.k);
    file.add_matrix("dataset/xi_y", data.xi_y);
    file.add_matrix("dataset/h", data.h);
    file.add_scalar("dataset/h0", data.h0);
    file.add_scalar("dataset/h_l", data.h_l);
    file.add_scalar("dataset/h_r", data.h_r);
    save_kltw(path, file);
}

std::variant<LinearDataset, NonlinearDataset> load_dataset(const std::filesystem::path& path) {
    const KltwFile file = load_kltw(path);
    if (file.scalar("artifact") != 1.0)
        throw FormatError("container does not hold a dataset", 0);
    const Grid grid = get_grid(file);
    if (file.scalar("dataset/kind") == tag_linear) {
        LinearDataset data;
        data.grid = grid;
        data.k = Field(grid, FieldKind::space_only, file.vector("dataset/k"));
        data.f = file.matrix("dataset/f");
        data.q = file.matrix("dataset/q");
        data.xi_f = file.matrix("dataset/xi_f");
        data.xi_q = file.matrix("dataset/xi_q");
        data.h0 = file.vector("dataset/h0");
        data.h_l = file.vector("dataset/h_l");
        data.h_r = file.vector("dataset/h_r");
        data.h = file.matrix("dataset/h");
        if (data.f.rows() != grid.total_nodes() || data.h.rows() != grid.total_nodes() ||
            data.q.rows() != grid.time_nodes() || data.h.cols() != data.f.cols())
            throw FormatError("dataset records do not fit the stored grid", 0);
        return data;
    }
    NonlinearDataset data;
    data.grid = grid;
    data.k = file.matrix("dataset/k");
    data.xi_y = file.matrix("dataset/xi_y");
    data.h = file.matrix("dataset/h");
    data.h0 = file.scalar("dataset/h0");
    data.h_l = file.scalar("dataset/h_l");
    data.h_r = file.scalar("dataset/h_r");
    if (data.k.rows() != grid.space_nodes() || data.h.rows() != grid.total_nodes() ||
        data.h.cols() != data.k.cols())
        throw FormatError("dataset records do not fit the stored grid", 0);
    return data;
}

} // namespace kltwin
