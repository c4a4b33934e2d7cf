// Python bindings for the core operations: patch algebra, masks, metrics,
// the synthetic scene generator, PPM I/O, and a model wrapper for
// restoration and loss evaluation.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "siammcvae/train.hpp"

namespace py = pybind11;
using namespace siammcvae;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const Array& arr) {
  Shape shape;
  for (int i = 0; i < arr.ndim(); ++i) shape.push_back(static_cast<int>(arr.shape(i)));
  std::vector<double> values(arr.data(), arr.data() + arr.size());
  return Tensor::constant(std::move(shape), std::move(values));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<ssize_t> shape;
  for (int d : t.shape()) shape.push_back(d);
  py::array_t<double> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Image image_from_array(const Array& arr) {
  if (arr.ndim() != 3) throw ShapeError("expected an (H, W, C) array");
  Image img(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
            static_cast<int>(arr.shape(2)));
  std::copy(arr.data(), arr.data() + arr.size(), img.px.begin());
  return img;
}

py::array_t<double> array_from_image(const Image& img) {
  py::array_t<double> out({static_cast<ssize_t>(img.height), static_cast<ssize_t>(img.width),
                           static_cast<ssize_t>(img.channels)});
  std::copy(img.px.begin(), img.px.end(), out.mutable_data());
  return out;
}

ModelConfig config_from_kwargs(int frame_height, int frame_width, int channels, int patch_size,
                               int width, int latent_width, int depth, int dec_depth,
                               int heads_enc, int heads_dec, const std::string& kernel,
                               bool reparam, int chunk_size, int adaptive_threshold) {
  ModelConfig cfg;
  cfg.grid = PatchGrid(frame_height, frame_width, channels, patch_size);
  cfg.width = width;
  cfg.latent_width = latent_width;
  cfg.depth = depth;
  cfg.dec_depth = dec_depth;
  cfg.heads_enc = heads_enc;
  cfg.heads_dec = heads_dec;
  cfg.kernel = kernel_from_name(kernel);
  cfg.reparam_enabled = reparam;
  cfg.chunk_size = chunk_size;
  cfg.adaptive_threshold = adaptive_threshold;
  cfg.validate();
  return cfg;
}

// Model wrapper: owns the parameters and the config.
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    params_ = init_params(cfg_, rng);
  }
  Model(ModelConfig cfg, ParamStore params) : cfg_(cfg), params_(std::move(params)) {}

  static Model load(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    TrainConfig cfg = train_config_from_map(ConfigMap::parse(ckpt.config_text));
    return Model(cfg.model, std::move(ckpt.params));
  }

  void save(const std::string& path) const {
    Checkpoint ckpt;
    TrainConfig tc;
    tc.model = cfg_;
    ckpt.config_text = train_config_to_map(tc).to_text();
    ckpt.params = params_;
    save_checkpoint(path, ckpt);
  }

  int64_t num_params() const { return params_.total_size(); }
  int patch_count() const { return cfg_.grid.patch_count(); }

  py::array_t<double> restore(const Array& a1, const Array& a2,
                              const std::vector<int>& masked) const {
    FramePair pair;
    pair.a1 = image_from_array(a1);
    pair.a2 = image_from_array(a2);
    MaskSet mask(masked, cfg_.grid.patch_count());
    return array_from_image(restore_image(params_, cfg_, pair, mask));
  }

  py::dict loss(const Array& a1, const Array& a2, const std::vector<int>& masked, double beta,
                uint64_t noise_seed) const {
    MaskSet mask(masked, cfg_.grid.patch_count());
    ModelView view = bind_constants(params_, cfg_);
    Tensor t1 = image_to_tensor(image_from_array(a1), 1.0 / kPixelScale);
    Tensor t2 = image_to_tensor(image_from_array(a2), 1.0 / kPixelScale);
    Rng noise_rng(noise_seed);
    Tensor noise = cfg_.reparam_enabled
                       ? gaussian_noise({cfg_.grid.patch_count() + 1, cfg_.latent_width}, noise_rng)
                       : Tensor();
    ForwardOut out = model_forward(t1, t2, mask, view, cfg_, noise);
    Tensor target = patchify(t2, cfg_.grid, all_patches(cfg_.grid.patch_count()));
    TotalLoss l = total_loss(out.patches, target, mask, cfg_.grid, out.mean, out.stddev, beta);
    py::dict d;
    d["total"] = l.total.value();
    d["recon"] = l.recon.value();
    d["kl"] = l.kl.value();
    return d;
  }

 private:
  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "siamese masked conditional VAE core";
  m.attr("__version__") = "0.1.0";

  py::register_exception<Error>(m, "CoreError");

  py::class_<PatchGrid>(m, "PatchGrid")
      .def(py::init<int, int, int, int>(), py::arg("height"), py::arg("width"),
           py::arg("channels"), py::arg("patch"))
      .def_readonly("height", &PatchGrid::height)
      .def_readonly("width", &PatchGrid::width)
      .def_readonly("channels", &PatchGrid::channels)
      .def_readonly("patch", &PatchGrid::patch)
      .def_property_readonly("patch_count", &PatchGrid::patch_count)
      .def_property_readonly("patch_dim", &PatchGrid::patch_dim);

  py::class_<MaskSet>(m, "MaskSet")
      .def(py::init<std::vector<int>, int>(), py::arg("masked"), py::arg("total"))
      .def_readonly("masked", &MaskSet::masked)
      .def_readonly("total", &MaskSet::total)
      .def("visible", &MaskSet::visible);

  m.def(
      "sample_mask",
      [](double ratio, int n, uint64_t seed) {
        Rng rng(seed);
        return sample_mask(ratio, n, rng);
      },
      py::arg("ratio"), py::arg("n"), py::arg("seed"));

  m.def(
      "patchify",
      [](const Array& image, int patch, py::object keep) {
        Tensor t = tensor_from_array(image);
        if (t.rank() != 3) throw ShapeError("patchify: expected an (H, W, C) array");
        PatchGrid grid(t.dim(0), t.dim(1), t.dim(2), patch);
        std::vector<int> keep_list = keep.is_none()
                                         ? all_patches(grid.patch_count())
                                         : keep.cast<std::vector<int>>();
        return array_from_tensor(patchify(t, grid, keep_list));
      },
      py::arg("image"), py::arg("patch"), py::arg("keep") = py::none());

  m.def(
      "unpatchify",
      [](const Array& rows, int height, int width, int channels, int patch) {
        PatchGrid grid(height, width, channels, patch);
        return array_from_tensor(unpatchify(tensor_from_array(rows), grid));
      },
      py::arg("rows"), py::arg("height"), py::arg("width"), py::arg("channels"),
      py::arg("patch"));

  m.def("mse", [](const Array& a, const Array& b) {
    return mse(image_from_array(a), image_from_array(b));
  });
  m.def("mae", [](const Array& a, const Array& b) {
    return mae(image_from_array(a), image_from_array(b));
  });
  m.def("psnr", [](const Array& a, const Array& b) {
    return psnr(image_from_array(a), image_from_array(b));
  });
  m.def("ssim", [](const Array& a, const Array& b) {
    return ssim(image_from_array(a), image_from_array(b));
  });
  m.def("fsim", [](const Array& a, const Array& b) {
    return fsim(image_from_array(a), image_from_array(b));
  });

  m.def(
      "generate_scene",
      [](uint64_t seed, int height, int width, int objects, double vel_min, double vel_max,
         const std::string& background, int length) {
        SceneSpec spec;
        spec.seed = seed;
        spec.height = height;
        spec.width = width;
        spec.objects = objects;
        spec.vel_min = vel_min;
        spec.vel_max = vel_max;
        spec.background = background_from_name(background);
        std::vector<Image> frames = generate_scene(spec, length);
        py::array_t<double> out({static_cast<ssize_t>(frames.size()),
                                 static_cast<ssize_t>(height), static_cast<ssize_t>(width),
                                 static_cast<ssize_t>(3)});
        double* p = out.mutable_data();
        for (const Image& f : frames) p = std::copy(f.px.begin(), f.px.end(), p);
        return out;
      },
      py::arg("seed"), py::arg("height") = 64, py::arg("width") = 64, py::arg("objects") = 8,
      py::arg("vel_min") = 1.0, py::arg("vel_max") = 3.0, py::arg("background") = "gradient",
      py::arg("length") = 16);

  m.def("read_ppm", [](const std::string& path) { return array_from_image(read_ppm(path)); });
  m.def("write_ppm", [](const std::string& path, const Array& img) {
    write_ppm(path, image_from_array(img));
  });

  py::class_<Model>(m, "Model")
      .def(py::init([](int frame_height, int frame_width, int channels, int patch_size,
                       int width, int latent_width, int depth, int dec_depth, int heads_enc,
                       int heads_dec, const std::string& kernel, bool reparam, int chunk_size,
                       int adaptive_threshold, uint64_t seed) {
             return Model(config_from_kwargs(frame_height, frame_width, channels, patch_size,
                                             width, latent_width, depth, dec_depth, heads_enc,
                                             heads_dec, kernel, reparam, chunk_size,
                                             adaptive_threshold),
                          seed);
           }),
           py::arg("frame_height") = 64, py::arg("frame_width") = 64, py::arg("channels") = 3,
           py::arg("patch_size") = 8, py::arg("width") = 96, py::arg("latent_width") = 48,
           py::arg("depth") = 4, py::arg("dec_depth") = 2, py::arg("heads_enc") = 4,
           py::arg("heads_dec") = 4, py::arg("kernel") = "adaptive", py::arg("reparam") = true,
           py::arg("chunk_size") = 64, py::arg("adaptive_threshold") = 128, py::arg("seed") = 1)
      .def_static("load", &Model::load, py::arg("path"))
      .def("save", &Model::save, py::arg("path"))
      .def_property_readonly("num_params", &Model::num_params)
      .def_property_readonly("patch_count", &Model::patch_count)
      .def("restore", &Model::restore, py::arg("a1"), py::arg("a2"), py::arg("masked"))
      .def("loss", &Model::loss, py::arg("a1"), py::arg("a2"), py::arg("masked"),
           py::arg("beta") = 0.2, py::arg("noise_seed") = 1);
}
