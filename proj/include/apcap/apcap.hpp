#pragma once

#include "apcap/codec.hpp"
#include "apcap/config.hpp"
#include "apcap/dataset/coco.hpp"
#include "apcap/dataset/cross_domain.hpp"
#include "apcap/dataset/manifest.hpp"
#include "apcap/diffusion.hpp"
#include "apcap/error.hpp"
#include "apcap/eval.hpp"
#include "apcap/genbackend/batch.hpp"
#include "apcap/genbackend/mock.hpp"
#include "apcap/genbackend/remote.hpp"
#include "apcap/genbackend/types.hpp"
#include "apcap/genbackend/wire.hpp"
#include "apcap/image.hpp"
#include "apcap/log.hpp"
#include "apcap/palette.hpp"
#include "apcap/perturb.hpp"
#include "apcap/pipeline.hpp"
#include "apcap/pose.hpp"
#include "apcap/pose_map.hpp"
#include "apcap/prompt.hpp"
#include "apcap/random.hpp"
#include "apcap/sample.hpp"
#include "apcap/schema.hpp"
#include "apcap/schema_io.hpp"
#include "apcap/screening.hpp"
#include "apcap/viz.hpp"
