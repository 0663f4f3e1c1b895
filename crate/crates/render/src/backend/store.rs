use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use promptsteer_core::ImageRef;

use super::Image;

/// Content-addressed image storage, in memory or as one file per image.
#[derive(Debug)]
pub enum ImageStore {
    Memory(Mutex<HashMap<String, Image>>),
    Disk(PathBuf),
}

const EXTENSIONS: [(&str, &str); 4] = [
    ("image/png", "png"),
    ("image/jpeg", "jpg"),
    ("image/webp", "webp"),
    ("application/octet-stream", "bin"),
];

fn extension(media_type: &str) -> &'static str {
    EXTENSIONS
        .iter()
        .find(|(m, _)| *m == media_type)
        .map_or("bin", |(_, e)| e)
}

fn is_content_id(id: &str) -> bool {
    id.len() == 64
        && id
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Media type from magic bytes.
pub fn sniff_media_type(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        "image/png"
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        "image/jpeg"
    } else if bytes.len() >= 12 && &bytes[..4] == b"RIFF" && &bytes[8..12] == b"WEBP" {
        "image/webp"
    } else {
        "application/octet-stream"
    }
}

impl ImageStore {
    pub fn memory() -> Self {
        ImageStore::Memory(Mutex::new(HashMap::new()))
    }

    pub fn disk(dir: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(ImageStore::Disk(dir.as_ref().to_path_buf()))
    }

    pub fn put(&self, bytes: &[u8], media_type: &str) -> io::Result<ImageRef> {
        let r = ImageRef::for_bytes(bytes, media_type);
        match self {
            ImageStore::Memory(map) => {
                map.lock()
                    .expect("image store poisoned")
                    .entry(r.id.clone())
                    .or_insert_with(|| Image {
                        bytes: bytes.to_vec(),
                        media_type: media_type.to_string(),
                    });
            }
            ImageStore::Disk(dir) => {
                let path = dir.join(format!("{}.{}", r.id, extension(media_type)));
                if !path.exists() {
                    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
                    tmp.write_all(bytes)?;
                    tmp.as_file().sync_all()?;
                    tmp.persist(&path).map_err(|e| e.error)?;
                }
            }
        }
        Ok(r)
    }

    /// Stored image for a content id; `None` if absent or not a content id.
    pub fn get(&self, id: &str) -> io::Result<Option<Image>> {
        if !is_content_id(id) {
            return Ok(None);
        }
        match self {
            ImageStore::Memory(map) => {
                Ok(map.lock().expect("image store poisoned").get(id).cloned())
            }
            ImageStore::Disk(dir) => {
                for (media_type, ext) in EXTENSIONS {
                    match fs::read(dir.join(format!("{id}.{ext}"))) {
                        Ok(bytes) => {
                            return Ok(Some(Image {
                                bytes,
                                media_type: media_type.to_string(),
                            }))
                        }
                        Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                        Err(e) => return Err(e),
                    }
                }
                Ok(None)
            }
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        matches!(self.get(id), Ok(Some(_)))
    }
}
