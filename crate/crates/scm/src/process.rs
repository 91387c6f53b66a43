//! Model adapters hosted in a child process.
//!
//! The pretrained models run in a separate worker (see `scripts/scm_worker.py`)
//! that talks JSON lines over stdin/stdout. Each request is one object with an
//! `op` field; each response is one object with `ok` and either `error` or the
//! op's payload:
//!
//! | op               | request fields            | response fields                     |
//! |------------------|---------------------------|-------------------------------------|
//! | `info`           |                           | `strides`, `channels`               |
//! | `extract_pyramid`| `image`                   | `levels` (3 x `{height,width,channels,data}`) |
//! | `generate_masks` | `image`                   | `masks` (list of packed bitmaps)    |
//! | `embed_image`    | `image`                   | `embedding` (list of floats)        |
//! | `embed_texts`    | `texts` (list of strings) | `embeddings` (list of float lists)  |
//!
//! `image` is `{height, width, rgb}` with `rgb` the base64 of the interleaved
//! 8-bit RGB bytes. Level `data` is base64 of little-endian `f32` values in
//! channel-major (`C x H x W`) order. A packed bitmap is base64 of the mask's
//! row-major bits, most significant bit first, zero-padded to a whole byte.
//!
//! The worker is started as `<command...> --weights <dir> --device <device>`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use scm_core::adapters::Modality;
use scm_core::{
    AdapterSet, BinaryMask, Embedder, Embedding, Error as CoreError, FeatureExtractor, FeatureMap, FeaturePyramid,
    MaskGenerator, PyramidLayout, RgbImage,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireImage {
    pub height: usize,
    pub width: usize,
    pub rgb: String,
}

impl WireImage {
    pub fn encode(image: &RgbImage) -> Self {
        Self {
            height: image.height(),
            width: image.width(),
            rgb: B64.encode(image.as_bytes()),
        }
    }

    pub fn decode(&self) -> Result<RgbImage, CoreError> {
        let bytes = B64
            .decode(&self.rgb)
            .map_err(|e| CoreError::Argument(format!("image payload: {e}")))?;
        RgbImage::new(self.height, self.width, bytes)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireLevel {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: String,
}

impl WireLevel {
    pub fn encode(map: &FeatureMap) -> Self {
        let bytes: Vec<u8> = map.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            height: map.height(),
            width: map.width(),
            channels: map.channels(),
            data: B64.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<FeatureMap, CoreError> {
        let bytes = B64
            .decode(&self.data)
            .map_err(|e| CoreError::Argument(format!("level payload: {e}")))?;
        if bytes.len() % 4 != 0 {
            return Err(CoreError::Argument("level payload is not a whole number of f32".into()));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        FeatureMap::new(self.height, self.width, self.channels, values)
    }
}

pub fn pack_mask(mask: &BinaryMask) -> String {
    let mut bytes = vec![0u8; mask.as_slice().len().div_ceil(8)];
    for (i, &v) in mask.as_slice().iter().enumerate() {
        if v != 0 {
            bytes[i / 8] |= 0x80 >> (i % 8);
        }
    }
    B64.encode(bytes)
}

pub fn unpack_mask(packed: &str, height: usize, width: usize) -> Result<BinaryMask, CoreError> {
    let bytes = B64
        .decode(packed)
        .map_err(|e| CoreError::Argument(format!("mask payload: {e}")))?;
    let n = height * width;
    if bytes.len() != n.div_ceil(8) {
        return Err(CoreError::Shape(format!(
            "packed mask has {} bytes, expected {} for {height}x{width}",
            bytes.len(),
            n.div_ceil(8)
        )));
    }
    let data = (0..n).map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1).collect();
    BinaryMask::new(height, width, data)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Info,
    ExtractPyramid { image: WireImage },
    GenerateMasks { image: WireImage },
    EmbedImage { image: WireImage },
    EmbedTexts { texts: Vec<String> },
}

impl Request {
    pub fn name(&self) -> &'static str {
        match self {
            Request::Info => "info",
            Request::ExtractPyramid { .. } => "extract_pyramid",
            Request::GenerateMasks { .. } => "generate_masks",
            Request::EmbedImage { .. } => "embed_image",
            Request::EmbedTexts { .. } => "embed_texts",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strides: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<WireLevel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<Vec<Vec<f32>>>,
}

impl Response {
    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(message.into()),
            ..Self::default()
        }
    }

    fn success() -> Self {
        Self {
            ok: true,
            ..Self::default()
        }
    }
}

const ADAPTER: &str = "process";

fn protocol_error(msg: impl Into<String>) -> CoreError {
    CoreError::inference(ADAPTER, msg)
}

/// Connection to one worker process.
pub struct ProcessClient {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    line: String,
}

impl ProcessClient {
    /// Starts `command` with `--weights` / `--device` appended.
    pub fn spawn(command: &[String], weights: Option<&Path>, device: &str) -> Result<Self, CoreError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| CoreError::Config("empty adapter command".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args);
        if let Some(w) = weights {
            cmd.arg("--weights").arg(w);
        }
        cmd.arg("--device").arg(device);
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| CoreError::Config(format!("starting adapter {program:?}: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child,
            stdin,
            stdout,
            line: String::new(),
        })
    }

    pub fn call(&mut self, request: &Request) -> Result<Response, CoreError> {
        let op = request.name();
        let mut msg = serde_json::to_string(request).map_err(|e| protocol_error(format!("{op}: {e}")))?;
        msg.push('\n');
        self.stdin
            .write_all(msg.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| protocol_error(format!("{op}: worker stdin: {e}")))?;
        self.line.clear();
        let n = self
            .stdout
            .read_line(&mut self.line)
            .map_err(|e| protocol_error(format!("{op}: worker stdout: {e}")))?;
        if n == 0 {
            return Err(protocol_error(format!("{op}: worker exited")));
        }
        let response: Response =
            serde_json::from_str(&self.line).map_err(|e| protocol_error(format!("{op}: malformed response: {e}")))?;
        if !response.ok {
            return Err(protocol_error(format!(
                "{op}: {}",
                response.error.as_deref().unwrap_or("unspecified worker error")
            )));
        }
        Ok(response)
    }

    pub fn info(&mut self) -> Result<PyramidLayout, CoreError> {
        let r = self.call(&Request::Info)?;
        match (r.strides, r.channels) {
            (Some(strides), Some(channels)) => Ok(PyramidLayout { strides, channels }),
            _ => Err(protocol_error("info: missing strides or channels")),
        }
    }
}

impl Drop for ProcessClient {
    fn drop(&mut self) {
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

type Shared = Arc<Mutex<ProcessClient>>;

fn with_client<T>(client: &Shared, f: impl FnOnce(&mut ProcessClient) -> Result<T, CoreError>) -> Result<T, CoreError> {
    let mut guard = client
        .lock()
        .map_err(|_| protocol_error("worker connection poisoned"))?;
    f(&mut guard)
}

pub struct ProcessExtractor(Shared);
pub struct ProcessMasks(Shared);
pub struct ProcessEmbedder(Shared);

impl FeatureExtractor for ProcessExtractor {
    fn extract_pyramid(&mut self, image: &RgbImage) -> scm_core::Result<FeaturePyramid> {
        scm_core::raster::check_min_size(image)?;
        let r = with_client(&self.0, |c| {
            c.call(&Request::ExtractPyramid {
                image: WireImage::encode(image),
            })
        })?;
        let strides = r
            .strides
            .ok_or_else(|| protocol_error("extract_pyramid: missing strides"))?;
        let levels = r
            .levels
            .ok_or_else(|| protocol_error("extract_pyramid: missing levels"))?;
        let [l3, l4, l5]: [WireLevel; 3] = levels
            .try_into()
            .map_err(|v: Vec<WireLevel>| protocol_error(format!("extract_pyramid: {} levels, expected 3", v.len())))?;
        FeaturePyramid::new([l3.decode()?, l4.decode()?, l5.decode()?], strides, image.dims())
    }
}

impl MaskGenerator for ProcessMasks {
    fn generate_masks(&mut self, image: &RgbImage) -> scm_core::Result<Vec<BinaryMask>> {
        let r = with_client(&self.0, |c| {
            c.call(&Request::GenerateMasks {
                image: WireImage::encode(image),
            })
        })?;
        r.masks
            .ok_or_else(|| protocol_error("generate_masks: missing masks"))?
            .iter()
            .map(|m| unpack_mask(m, image.height(), image.width()))
            .collect()
    }
}

impl Embedder for ProcessEmbedder {
    fn embed_image(&mut self, patch: &RgbImage) -> scm_core::Result<Embedding> {
        let r = with_client(&self.0, |c| {
            c.call(&Request::EmbedImage {
                image: WireImage::encode(patch),
            })
        })?;
        Embedding::new(
            r.embedding
                .ok_or_else(|| protocol_error("embed_image: missing embedding"))?,
            Modality::Image,
        )
    }

    fn embed_texts(&mut self, texts: &[String]) -> scm_core::Result<Vec<Embedding>> {
        scm_core::adapters::check_terms(texts)?;
        let r = with_client(&self.0, |c| c.call(&Request::EmbedTexts { texts: texts.to_vec() }))?;
        let all = r
            .embeddings
            .ok_or_else(|| protocol_error("embed_texts: missing embeddings"))?;
        if all.len() != texts.len() {
            return Err(protocol_error(format!(
                "embed_texts: {} texts, {} embeddings",
                texts.len(),
                all.len()
            )));
        }
        all.into_iter().map(|v| Embedding::new(v, Modality::Text)).collect()
    }
}

/// One worker process serving all three adapter roles.
pub fn process_adapters(client: ProcessClient) -> AdapterSet {
    let shared: Shared = Arc::new(Mutex::new(client));
    AdapterSet::new(Box::new(ProcessExtractor(shared.clone())))
        .with_masks(Box::new(ProcessMasks(shared.clone())))
        .with_embedder(Box::new(ProcessEmbedder(shared)))
}

/// Answers one request with the given adapters.
pub fn handle(adapters: &mut AdapterSet, layout: PyramidLayout, request: Request) -> Response {
    let result = (|| -> Result<Response, CoreError> {
        let mut r = Response::success();
        match request {
            Request::Info => {
                r.strides = Some(layout.strides);
                r.channels = Some(layout.channels);
            }
            Request::ExtractPyramid { image } => {
                let p = adapters.extractor.extract_pyramid(&image.decode()?)?;
                r.strides = Some(p.strides());
                r.levels = Some(p.levels().iter().map(WireLevel::encode).collect());
            }
            Request::GenerateMasks { image } => {
                let gen = adapters
                    .masks
                    .as_deref_mut()
                    .ok_or_else(|| CoreError::Config("no mask generator".into()))?;
                r.masks = Some(gen.generate_masks(&image.decode()?)?.iter().map(pack_mask).collect());
            }
            Request::EmbedImage { image } => {
                let e = adapters
                    .embedder
                    .as_deref_mut()
                    .ok_or_else(|| CoreError::Config("no embedder".into()))?;
                r.embedding = Some(e.embed_image(&image.decode()?)?.values().to_vec());
            }
            Request::EmbedTexts { texts } => {
                let e = adapters
                    .embedder
                    .as_deref_mut()
                    .ok_or_else(|| CoreError::Config("no embedder".into()))?;
                r.embeddings = Some(e.embed_texts(&texts)?.iter().map(|v| v.values().to_vec()).collect());
            }
        }
        Ok(r)
    })();
    result.unwrap_or_else(|e| Response::failure(e.to_string()))
}

/// Worker loop: one JSON request per input line, one response line each.
///
/// `fail_on` names an op that always answers with an error.
pub fn serve(
    adapters: &mut AdapterSet,
    layout: PyramidLayout,
    input: impl BufRead,
    mut output: impl Write,
    fail_on: Option<&str>,
) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Ok(req) if Some(req.name()) == fail_on => Response::failure(format!("{} failed on request", req.name())),
            Ok(req) => handle(adapters, layout, req),
            Err(e) => Response::failure(format!("bad request: {e}")),
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
