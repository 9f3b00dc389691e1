#pragma once

#include "cinescale/analysis.hpp"
#include "cinescale/attention.hpp"
#include "cinescale/cascade.hpp"
#include "cinescale/checkpoint.hpp"
#include "cinescale/cli.hpp"
#include "cinescale/codec.hpp"
#include "cinescale/conditioning.hpp"
#include "cinescale/config.hpp"
#include "cinescale/denoiser.hpp"
#include "cinescale/dit.hpp"
#include "cinescale/linalg.hpp"
#include "cinescale/lora.hpp"
#include "cinescale/parallel.hpp"
#include "cinescale/ppm.hpp"
#include "cinescale/report.hpp"
#include "cinescale/rng.hpp"
#include "cinescale/rope.hpp"
#include "cinescale/schedule.hpp"
#include "cinescale/synthetic.hpp"
#include "cinescale/tensor.hpp"
#include "cinescale/tensor_ops.hpp"
#include "cinescale/trainer.hpp"
#include "cinescale/unet.hpp"
#include "cinescale/unet_scale.hpp"
