fn main() {
    println!("gridpost");
}
