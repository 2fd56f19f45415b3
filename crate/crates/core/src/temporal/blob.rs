//! Framework-neutral tensor files: a flat little-endian f32 blob plus a text
//! manifest with one `name=<s> shape=<d0,d1,..> offset=<elements>` line per
//! tensor.

use super::TemporalError;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            shape,
            data,
        }
    }
}

/// Serializes tensors in order. Returns `(manifest, blob)`.
pub fn write_tensors(tensors: &[NamedTensor]) -> Result<(String, Vec<u8>), TemporalError> {
    let mut manifest = String::new();
    let mut blob = Vec::new();
    let mut offset = 0usize;
    for t in tensors {
        let n: usize = t.shape.iter().product();
        if n != t.data.len() {
            return Err(TemporalError::Manifest(format!(
                "tensor {} has shape {:?} but {} values",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
        if t.name.is_empty() || t.name.contains(char::is_whitespace) {
            return Err(TemporalError::Manifest(format!("bad tensor name {:?}", t.name)));
        }
        let shape: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!(
            "name={} shape={} offset={}\n",
            t.name,
            shape.join(","),
            offset
        ));
        for v in &t.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        offset += n;
    }
    Ok((manifest, blob))
}

pub fn read_tensors(manifest: &str, blob: &[u8]) -> Result<Vec<NamedTensor>, TemporalError> {
    if !blob.len().is_multiple_of(4) {
        return Err(TemporalError::Manifest(format!(
            "blob length {} is not a multiple of 4",
            blob.len()
        )));
    }
    let values = blob.len() / 4;
    let mut out = Vec::new();
    for (i, line) in manifest.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| TemporalError::Manifest(format!("line {}: {m}", i + 1));
        let (mut name, mut shape, mut offset) = (None, None, None);
        for token in line.split_whitespace() {
            match token.split_once('=') {
                Some(("name", v)) => name = Some(v.to_string()),
                Some(("shape", v)) => {
                    let dims = if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split(',')
                            .map(|d| d.parse::<usize>().map_err(|_| err(format!("bad dim {d:?}"))))
                            .collect::<Result<Vec<_>, _>>()?
                    };
                    shape = Some(dims);
                }
                Some(("offset", v)) => {
                    offset = Some(v.parse::<usize>().map_err(|_| err(format!("bad offset {v:?}")))?)
                }
                _ => return Err(err(format!("unexpected token {token:?}"))),
            }
        }
        let name = name.ok_or_else(|| err("missing name".into()))?;
        let shape = shape.ok_or_else(|| err("missing shape".into()))?;
        let offset = offset.ok_or_else(|| err("missing offset".into()))?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| err("shape overflows".into()))?;
        let end = offset
            .checked_add(n)
            .filter(|&e| e <= values)
            .ok_or_else(|| err(format!("tensor {name} runs past the end of the blob")))?;
        let data = blob[offset * 4..end * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push(NamedTensor { name, shape, data });
    }
    Ok(out)
}

/// Removes and returns the tensor called `name`, checking its shape.
pub(crate) fn take(
    tensors: &mut Vec<NamedTensor>,
    name: &str,
    shape: &[usize],
) -> Result<Vec<f32>, TemporalError> {
    let i = tensors
        .iter()
        .position(|t| t.name == name)
        .ok_or_else(|| TemporalError::Manifest(format!("missing tensor {name}")))?;
    let t = tensors.swap_remove(i);
    if t.shape != shape {
        return Err(TemporalError::Manifest(format!(
            "tensor {name} has shape {:?}, expected {shape:?}",
            t.shape
        )));
    }
    Ok(t.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_layout() {
        let ts = vec![
            NamedTensor::new("a", vec![2, 1], vec![1.0, -2.5]),
            NamedTensor::new("b", vec![3], vec![0.0, 1e-20, 7.0]),
        ];
        let (m, b) = write_tensors(&ts).unwrap();
        assert_eq!(m, "name=a shape=2,1 offset=0\nname=b shape=3 offset=2\n");
        assert_eq!(b.len(), 20);
        assert_eq!(&b[4..8], &(-2.5f32).to_le_bytes());
        assert_eq!(read_tensors(&m, &b).unwrap(), ts);
    }

    #[test]
    fn rejects_inconsistent_files() {
        assert!(write_tensors(&[NamedTensor::new("a", vec![2], vec![1.0])]).is_err());
        assert!(read_tensors("name=a shape=4 offset=0", &[0; 8]).is_err());
        assert!(read_tensors("name=a shape=1 offset=0", &[0; 3]).is_err());
        assert!(read_tensors("name=a offset=0", &[0; 4]).is_err());
        assert!(read_tensors("name=a shape=1 offset=18446744073709551615", &[0; 4]).is_err());
    }
}
