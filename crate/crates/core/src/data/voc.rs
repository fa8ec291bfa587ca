//! VOC-style XML annotations.
//!
//! Recognized elements: `filename`, `size/{width,height}`, and for every
//! `object` its `name` and `bndbox/{xmin,ymin,xmax,ymax}`. Everything else is
//! ignored. Coordinates may be integers or decimals.

use std::fmt::Write as _;

use super::{BoxAnnotation, ClassTaxonomy, ImageAnnotation};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct VocParse {
    pub annotation: ImageAnnotation,
    /// Boxes that extended past the image and were clamped.
    pub clamped: usize,
}

fn child<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<roxmltree::Node<'a, 'a>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn text<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|c| c.text()).map(str::trim)
}

/// Parses one document. `file` names the source in errors and supplies the id
/// when the document has no `filename`.
pub fn parse_voc(xml: &str, file: &str, taxonomy: &ClassTaxonomy) -> Result<VocParse> {
    let err = |detail: String| Error::Annotation { file: file.to_string(), detail };
    let doc = roxmltree::Document::parse(xml).map_err(|e| err(format!("malformed XML: {e}")))?;
    let root = doc.root_element();
    let size = child(root, "size").ok_or_else(|| err("missing <size>".into()))?;
    let dim = |name: &str| -> Result<usize> {
        let v = text(size, name).ok_or_else(|| err(format!("missing <size>/<{name}>")))?;
        match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(err(format!("<size>/<{name}> must be a positive integer, got `{v}`"))),
        }
    };
    let (width, height) = (dim("width")?, dim("height")?);
    let id = text(root, "filename")
        .filter(|s| !s.is_empty())
        .map(|s| s.rsplit_once('.').map_or(s, |(stem, _)| stem).to_string())
        .unwrap_or_else(|| {
            let base = file.rsplit(['/', '\\']).next().unwrap_or(file);
            base.rsplit_once('.').map_or(base, |(stem, _)| stem).to_string()
        });

    let mut objects = Vec::new();
    let mut problems = Vec::new();
    let mut clamped = 0;
    for (index, obj) in root.children().filter(|c| c.has_tag_name("object")).enumerate() {
        let parsed = (|| -> std::result::Result<BoxAnnotation, String> {
            let name = text(obj, "name").ok_or("missing <name>")?;
            let class_id = taxonomy.index_of(name).ok_or_else(|| format!("unknown class `{name}`"))?;
            let bnd = child(obj, "bndbox").ok_or("missing <bndbox>")?;
            let coord = |tag: &str| -> std::result::Result<f64, String> {
                let v = text(bnd, tag).ok_or_else(|| format!("missing <{tag}>"))?;
                v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("<{tag}> is not a number: `{v}`"))
            };
            let (x1, y1, x2, y2) = (coord("xmin")?, coord("ymin")?, coord("xmax")?, coord("ymax")?);
            if x2 <= x1 || y2 <= y1 {
                return Err(format!("inverted box ({x1}, {y1}, {x2}, {y2})"));
            }
            Ok(BoxAnnotation::new(class_id, x1, y1, x2, y2))
        })();
        match parsed {
            Ok(b) => match b.clip(0.0, 0.0, width as f64, height as f64) {
                Some(c) => {
                    if c != b {
                        clamped += 1;
                    }
                    objects.push(c);
                }
                None => problems.push(format!("object {index}: box lies outside the {width}×{height} image")),
            },
            Err(e) => problems.push(format!("object {index}: {e}")),
        }
    }
    if !problems.is_empty() {
        return Err(err(problems.join("; ")));
    }
    if clamped > 0 {
        log::warn!("{file}: clamped {clamped} box(es) to the image bounds");
    }
    Ok(VocParse { annotation: ImageAnnotation { id, width, height, objects }, clamped })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_voc(anno: &ImageAnnotation, taxonomy: &ClassTaxonomy) -> Result<String> {
    let mut out = String::from("<annotation>\n");
    let _ = writeln!(out, "  <filename>{}.ppm</filename>", escape(&anno.id));
    let _ = writeln!(
        out,
        "  <size>\n    <width>{}</width>\n    <height>{}</height>\n    <depth>3</depth>\n  </size>",
        anno.width, anno.height
    );
    for (i, o) in anno.objects.iter().enumerate() {
        let name = taxonomy.name(o.class_id).ok_or_else(|| {
            Error::invalid(format!("object {i} of `{}` has class {} outside the taxonomy", anno.id, o.class_id))
        })?;
        let _ = writeln!(
            out,
            "  <object>\n    <name>{}</name>\n    <bndbox>\n      <xmin>{}</xmin>\n      <ymin>{}</ymin>\n      <xmax>{}</xmax>\n      <ymax>{}</ymax>\n    </bndbox>\n  </object>",
            escape(name),
            o.x1,
            o.y1,
            o.x2,
            o.y2
        );
    }
    out.push_str("</annotation>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"<annotation>
  <filename>Adachi_20170906093835.jpg</filename>
  <size><width>600</width><height>600</height><depth>3</depth></size>
  <object>
    <name>D00</name><pose>Unspecified</pose>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>110</xmax><ymax>220</ymax></bndbox>
  </object>
</annotation>"#;

    #[test]
    fn minimal_document() {
        let p = parse_voc(MINIMAL, "a.xml", &ClassTaxonomy::rdd2018()).unwrap();
        assert_eq!(p.annotation.id, "Adachi_20170906093835");
        assert_eq!(p.annotation.objects, vec![BoxAnnotation::new(0, 10.0, 20.0, 110.0, 220.0)]);
        assert_eq!(p.clamped, 0);
    }

    #[test]
    fn empty_object_list() {
        let xml = "<annotation><size><width>4</width><height>5</height></size></annotation>";
        let p = parse_voc(xml, "dir/empty.xml", &ClassTaxonomy::rdd2018()).unwrap();
        assert!(p.annotation.objects.is_empty());
        assert_eq!(p.annotation.id, "empty");
    }

    #[test]
    fn errors_are_itemized() {
        let tax = ClassTaxonomy::rdd2018();
        let xml = MINIMAL.replace("<xmax>110</xmax>", "<xmax>5</xmax>").replace(
            "</annotation>",
            "<object><name>D99</name><bndbox><xmin>1</xmin><ymin>1</ymin><xmax>2</xmax><ymax>2</ymax></bndbox></object></annotation>",
        );
        let msg = parse_voc(&xml, "bad.xml", &tax).unwrap_err().to_string();
        assert!(msg.starts_with("bad.xml:"), "{msg}");
        assert!(msg.contains("object 0: inverted box") && msg.contains("object 1: unknown class `D99`"), "{msg}");
        assert!(parse_voc("<annotation><size>", "x.xml", &tax).unwrap_err().to_string().contains("malformed"));
    }

    #[test]
    fn out_of_bounds_boxes_are_clamped() {
        let xml = MINIMAL.replace("<ymax>220</ymax>", "<ymax>640.5</ymax>");
        let p = parse_voc(&xml, "a.xml", &ClassTaxonomy::rdd2018()).unwrap();
        assert_eq!(p.annotation.objects[0].y2, 600.0);
        assert_eq!(p.clamped, 1);
    }

    #[test]
    fn write_then_parse_is_identity() {
        let tax = ClassTaxonomy::rdd2018();
        let anno = ImageAnnotation {
            id: "img&1".into(),
            width: 64,
            height: 48,
            objects: vec![BoxAnnotation::new(7, 0.5, 1.25, 63.0, 48.0), BoxAnnotation::new(3, 2.0, 3.0, 4.0, 5.0)],
        };
        let xml = write_voc(&anno, &tax).unwrap();
        assert_eq!(parse_voc(&xml, "x.xml", &tax).unwrap().annotation, anno);
    }
}
